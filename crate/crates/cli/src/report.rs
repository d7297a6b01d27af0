use std::fmt::{Display, Write};

/// Run report: `key = value` lines grouped under `[section]` headers, in
/// insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, section: &str, key: impl Into<String>, value: impl Display) {
        let entry = (key.into(), normalize(value.to_string()));
        match self.sections.iter_mut().find(|(name, _)| name == section) {
            Some((_, entries)) => entries.push(entry),
            None => self.sections.push((section.to_string(), vec![entry])),
        }
    }

    pub fn extend<K: Into<String>, V: Display>(&mut self, section: &str, items: impl IntoIterator<Item = (K, V)>) {
        for (k, v) in items {
            self.put(section, k, v);
        }
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(name, _)| name == section)
            .and_then(|(_, e)| e.iter().find(|(k, _)| k == key))
            .map(|(_, v)| v.as_str())
    }

    /// First `section.key` whose value parses as a non-finite number.
    pub fn first_non_finite(&self) -> Option<String> {
        self.sections.iter().find_map(|(name, entries)| {
            entries.iter().find_map(|(k, v)| match v.parse::<f64>() {
                Ok(x) if !x.is_finite() => Some(format!("{name}.{k}")),
                _ => None,
            })
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (name, entries)) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

/// Decimal numbers are re-rendered in the shortest round-trip form, which
/// switches to exponent notation for very small or large magnitudes.
fn normalize(v: String) -> String {
    match v.parse::<f64>() {
        Ok(x) if v.contains('.') => format!("{x:?}"),
        _ => v,
    }
}
