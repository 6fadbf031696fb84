use proptest::prelude::*;

use infilter_core::filterbank::fir_exact;
use infilter_core::fixedpoint::{fx_add, fx_mp, Alu, FixedPointFormat, OpTrace, Overflow};
use infilter_core::mp::{mp, mp_hw_levels, mp_inner_product, DifferentialVector, MpInput, DEFAULT_HW_ITERS};

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0..8.0f64, 1..48)
}

fn mass_above(v: &[f64], z: f64) -> f64 {
    v.iter().map(|x| (x - z).max(0.0)).sum()
}

proptest! {
    #[test]
    fn level_satisfies_the_margin(v in values(), gamma in 1e-3..8.0f64) {
        let z = mp(&v, gamma).unwrap();
        prop_assert!((mass_above(&v, z) - gamma).abs() <= 1e-9);
    }

    #[test]
    fn level_is_monotone(v in values(), gamma in 1e-3..8.0f64, i in any::<prop::sample::Index>(), d in 1e-3..4.0f64) {
        let z = mp(&v, gamma).unwrap();
        let mut up = v.clone();
        up[i.index(v.len())] += d;
        prop_assert!(mp(&up, gamma).unwrap() >= z);
        prop_assert!(mp(&v, gamma + d).unwrap() < z);
    }

    #[test]
    fn level_is_shift_equivariant(v in values(), gamma in 1e-3..8.0f64, c in -50.0..50.0f64) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let lhs = mp(&shifted, gamma).unwrap();
        let rhs = mp(&v, gamma).unwrap() + c;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn hardware_solver_converges(v in values(), gamma in 1e-3..8.0f64) {
        let levels = mp_hw_levels(&MpInput::new(&v, gamma).unwrap(), DEFAULT_HW_ITERS).unwrap();
        let residuals: Vec<f64> = levels.iter().map(|&z| (mass_above(&v, z) - gamma).abs()).collect();
        for w in residuals.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{residuals:?}");
        }
        let range = v.iter().copied().fold(f64::MIN, f64::max) - v.iter().copied().fold(f64::MAX, f64::min);
        let exact = mp(&v, gamma).unwrap();
        prop_assert!((levels.last().unwrap() - exact).abs() <= range / 1024.0 + 1e-12);
    }

    #[test]
    fn inner_product_is_antisymmetric(
        pair in (1usize..24).prop_flat_map(|n| (prop::collection::vec(-1.0..1.0f64, n), prop::collection::vec(-1.0..1.0f64, n))),
        gamma in 0.05..2.0f64,
    ) {
        let (h, x) = pair;
        let neg = |v: &[f64]| v.iter().map(|a| -a).collect::<Vec<f64>>();
        let base = mp_inner_product(&DifferentialVector::encode(&h), &DifferentialVector::encode(&x), gamma).unwrap();
        let flip_x = mp_inner_product(&DifferentialVector::encode(&h), &DifferentialVector::encode(&neg(&x)), gamma).unwrap();
        let flip_h = mp_inner_product(&DifferentialVector::encode(&neg(&h)), &DifferentialVector::encode(&x), gamma).unwrap();
        prop_assert_eq!(flip_x, -base);
        prop_assert_eq!(flip_h, -base);
    }

    #[test]
    fn exact_fir_is_linear(
        h in prop::collection::vec(-1.0..1.0f64, 1..16),
        xy in (4usize..64).prop_flat_map(|n| (prop::collection::vec(-1.0..1.0f64, n), prop::collection::vec(-1.0..1.0f64, n))),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let (x, y) = xy;
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = fir_exact(&mix, &h).unwrap();
        let fx = fir_exact(&x, &h).unwrap();
        let fy = fir_exact(&y, &h).unwrap();
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-9);
        }
    }

    #[test]
    fn quantization_round_trip_within_half_lsb(word in 2u32..=32, frac_seed in any::<u32>(), t in 0.0..1.0f64) {
        let frac = frac_seed % word;
        let f = FixedPointFormat::new(word, frac).unwrap();
        let v = f.min_value() + t * (f.max_value() - f.min_value());
        prop_assert!((f.round_trip(v) - v).abs() <= f.lsb() / 2.0 + 1e-12 * v.abs());
    }

    #[test]
    fn saturating_add_clamps(a in -600i64..600, b in -600i64..600) {
        let f = FixedPointFormat::new(10, 4).unwrap();
        let mut t = OpTrace::new();
        let (r, sat) = fx_add(a.clamp(-512, 511), b.clamp(-512, 511), &f, &mut t);
        let exact = a.clamp(-512, 511) + b.clamp(-512, 511);
        prop_assert_eq!(r, exact.clamp(-512, 511));
        prop_assert_eq!(sat, !(-512..=511).contains(&exact));
        prop_assert_eq!(t.multiplies(), 0);
    }

    #[test]
    fn integer_level_tracks_the_quantized_float_level(raw in prop::collection::vec(-400i64..400, 1..32), g in 1i64..256) {
        let f = FixedPointFormat::new(10, 4).unwrap();
        let mut t = OpTrace::new();
        let mut alu = Alu::new(&mut t, Overflow::Saturate);
        let z = fx_mp(&mut alu, &raw, g, &f, DEFAULT_HW_ITERS).unwrap();
        let floats: Vec<f64> = raw.iter().map(|&r| f.to_f64(r)).collect();
        let exact = f.round_trip(mp(&floats, f.to_f64(g)).unwrap());
        prop_assert!((f.to_f64(z) - exact).abs() <= 2.0 * f.lsb(), "{} vs {exact}", f.to_f64(z));
        prop_assert_eq!(t.multiplies(), 0);
    }
}
