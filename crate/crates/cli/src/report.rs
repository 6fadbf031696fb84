use std::fmt;

/// Key/value block printed on stdout after every command.
///
/// ```text
/// [result]
/// command = train
/// status = ok
/// test_acc = 0.9583
/// [end]
/// ```
pub struct Report {
    fields: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Report { fields: Vec::new() };
        r.field("command", command);
        r.field("status", "ok");
        r
    }

    pub fn failure(command: &str, message: &str) -> Self {
        let mut r = Report { fields: Vec::new() };
        r.field("command", command);
        r.field("status", "error");
        r.field("message", message.replace('\n', " "));
        r
    }

    pub fn field(&mut self, key: &str, value: impl fmt::Display) {
        self.fields.push((key.to_string(), value.to_string()));
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[result]")?;
        for (k, v) in &self.fields {
            writeln!(f, "{k} = {v}")?;
        }
        writeln!(f, "[end]")
    }
}
