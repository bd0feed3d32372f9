//! Census-style rows and the sentence template.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Columns used by the template, in template order.
pub const TEMPLATE_FIELDS: [&str; 10] = [
    "workclass",
    "education",
    "education-num",
    "occupation",
    "sex",
    "marital-status",
    "relationship",
    "race",
    "native-country",
    "hours-per-week",
];

/// Income column of the census data.
pub const LABEL_FIELD: &str = "income";

/// Named attributes of one record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TabularRow {
    fields: BTreeMap<String, String>,
}

impl TabularRow {
    pub fn from_pairs<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            fields: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn get(&self, field: &str) -> Option<&str> {
        self.fields.get(field).map(String::as_str)
    }

    pub fn set(&mut self, field: &str, value: impl Into<String>) {
        self.fields.insert(field.to_string(), value.into());
    }

    pub fn remove(&mut self, field: &str) -> Option<String> {
        self.fields.remove(field)
    }

    fn require(&self, field: &str) -> Result<&str> {
        match self.get(field) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(Error::Schema(field.to_string())),
        }
    }
}

pub fn row_to_sentence(row: &TabularRow) -> Result<String> {
    let mut v = Vec::with_capacity(TEMPLATE_FIELDS.len());
    for f in TEMPLATE_FIELDS {
        v.push(row.require(f)?);
    }
    Ok(format!(
        "A person's workclass is {}, education is {} (number of years of education is {}), \
         occupation is {}, sex is {}, marital status is {}, relationship is {}, race is {}, \
         native country is {}, and they work {} hours per week.",
        v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]
    ))
}

/// `>50K` → 1, `<=50K` → 0; a trailing period is accepted.
pub fn income_label(row: &TabularRow) -> Result<usize> {
    let raw = row.require(LABEL_FIELD)?;
    match raw.trim_end_matches('.') {
        ">50K" => Ok(1),
        "<=50K" => Ok(0),
        other => Err(Error::invalid(format!("unknown income value {other:?}"))),
    }
}

/// Reads a CSV with a header row. Only template columns and the income
/// column are kept; cells are trimmed.
pub fn read_tabular_csv(path: &Path) -> Result<Vec<TabularRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let loc = |line: Option<u64>| {
        format!("{}:{}", path.display(), line.map_or("?".to_string(), |l| l.to_string()))
    };
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(loc(Some(1)), e.to_string()))?
        .clone();
    for f in TEMPLATE_FIELDS {
        if !headers.iter().any(|h| h == f) {
            return Err(Error::Schema(f.to_string()));
        }
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(loc(e.position().map(|p| p.line())), e.to_string()))?;
        let row = TabularRow::from_pairs(
            headers
                .iter()
                .zip(rec.iter())
                .filter(|(h, _)| TEMPLATE_FIELDS.contains(h) || *h == LABEL_FIELD)
                .map(|(h, v)| (h.to_string(), v.to_string())),
        );
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_row() -> TabularRow {
        TabularRow::from_pairs([
            ("workclass", "Private"),
            ("education", "7th-8th grade"),
            ("education-num", "4"),
            ("occupation", "Machine-op-inspct"),
            ("sex", "female"),
            ("marital-status", "Divorced"),
            ("relationship", "Unmarried"),
            ("race", "White"),
            ("native-country", "United-States"),
            ("hours-per-week", "40"),
        ])
    }

    #[test]
    fn sex_slot_is_local() {
        let a = row_to_sentence(&sample_row()).unwrap();
        let mut r = sample_row();
        r.set("sex", "male");
        let b = row_to_sentence(&r).unwrap();
        assert_eq!(a.replacen("sex is female", "sex is male", 1), b);
    }

    #[test]
    fn missing_field_is_named() {
        let mut r = sample_row();
        r.remove("occupation");
        match row_to_sentence(&r) {
            Err(Error::Schema(f)) => assert_eq!(f, "occupation"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn income_values() {
        let mut r = sample_row();
        r.set(LABEL_FIELD, ">50K.");
        assert_eq!(income_label(&r).unwrap(), 1);
        r.set(LABEL_FIELD, "<=50K");
        assert_eq!(income_label(&r).unwrap(), 0);
        r.set(LABEL_FIELD, "maybe");
        assert!(income_label(&r).is_err());
    }
}
