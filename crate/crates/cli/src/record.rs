use std::fmt;

/// One line of `key=value` output. The first field is always `record=<kind>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    fields: Vec<(String, String)>,
}

/// Kind of the records that carry wall-clock measurements. They are the
/// only output allowed to differ between identical runs.
pub const TIMING: &str = "timing";

impl Record {
    pub fn new(kind: &str) -> Self {
        Self {
            fields: vec![("record".into(), kind.into())],
        }
    }

    /// Append a field. Whitespace inside the value becomes `_`.
    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        let v: String = value
            .to_string()
            .chars()
            .map(|c| if c.is_whitespace() { '_' } else { c })
            .collect();
        self.fields.push((key.into(), v));
        self
    }

    pub fn kind(&self) -> &str {
        &self.fields[0].1
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn is_timing(&self) -> bool {
        self.kind() == TIMING
    }

    pub fn parse(line: &str) -> Option<Self> {
        let fields: Vec<(String, String)> = line
            .split(' ')
            .map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Option<_>>()?;
        (fields.first()?.0 == "record").then_some(Self { fields })
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Records rendered one per line, wall-clock records dropped.
pub fn metric_lines(records: &[Record]) -> String {
    records
        .iter()
        .filter(|r| !r.is_timing())
        .map(|r| format!("{r}\n"))
        .collect()
}
