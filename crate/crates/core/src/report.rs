//! Plain `key=value` reports. Reals are written with 9 significant digits.

use std::fmt;

pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

pub fn reals(xs: &[f64]) -> String {
    xs.iter().map(|&x| real(x)).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues(Vec<(String, String)>);

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) -> &mut Self {
        self.0.push((key.into(), value.to_string()));
        self
    }

    pub fn push_real(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.push(key, real(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.0
    }

    /// Parses the output of `Display`; lines without `=` are skipped.
    pub fn parse(text: &str) -> Self {
        KeyValues(
            text.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect(),
        )
    }
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(real(3.12244), "3.12244000e0");
        assert_eq!(real(-1.0 / 3.0), "-3.33333333e-1");
        assert_eq!(real(0.0), "0.00000000e0");
    }

    #[test]
    fn round_trip() {
        let mut kv = KeyValues::new();
        kv.push("r_star", 1).push_real("gap", 1e-9);
        let back = KeyValues::parse(&kv.to_string());
        assert_eq!(back, kv);
        assert_eq!(back.get("r_star"), Some("1"));
        assert_eq!(back.get("gap").unwrap().parse::<f64>().unwrap(), 1e-9);
    }
}
