//! Survey item metadata and per-bank response tables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemSpec {
    pub item_id: String,
    pub question: String,
    /// `(code, label)` in option order: numeric codes ascending.
    pub options: Vec<(String, String)>,
    pub ordinal: bool,
    pub options_count: usize,
    pub demographic: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ItemError {
    #[error("item metadata is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("item {item}: options_count {declared} but {actual} options")]
    CountMismatch { item: String, declared: usize, actual: usize },
    #[error("item {0}: fewer than two options")]
    TooFewOptions(String),
    #[error("item {0}: ordinal codes must be \"1\"..\"K\"")]
    NonContiguous(String),
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    #[serde(default)]
    question: String,
    options: BTreeMap<String, String>,
    #[serde(rename = "DEMOGRAPHIC", alias = "demographic", default)]
    demographic: bool,
    ordinal: bool,
    options_count: Option<usize>,
}

impl ItemSpec {
    pub fn new(item_id: &str, ordinal: bool, labels: &[&str]) -> Self {
        let options: Vec<(String, String)> =
            labels.iter().enumerate().map(|(i, l)| ((i + 1).to_string(), l.to_string())).collect();
        ItemSpec {
            item_id: item_id.into(),
            question: String::new(),
            options_count: options.len(),
            options,
            ordinal,
            demographic: false,
        }
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.options.iter().map(|(c, _)| c.as_str())
    }

    pub fn code_index(&self, code: &str) -> Option<usize> {
        self.options.iter().position(|(c, _)| c == code)
    }

    fn check(&self) -> Result<(), ItemError> {
        if self.options.len() != self.options_count {
            return Err(ItemError::CountMismatch {
                item: self.item_id.clone(),
                declared: self.options_count,
                actual: self.options.len(),
            });
        }
        if self.options_count < 2 {
            return Err(ItemError::TooFewOptions(self.item_id.clone()));
        }
        if self.ordinal && self.codes().enumerate().any(|(i, c)| c != (i + 1).to_string()) {
            return Err(ItemError::NonContiguous(self.item_id.clone()));
        }
        Ok(())
    }
}

/// Parses an object of item records keyed by item id. Items come back sorted by id.
pub fn load_items(bytes: &[u8]) -> Result<Vec<ItemSpec>, ItemError> {
    let records: BTreeMap<String, ItemRecord> = serde_json::from_slice(bytes)?;
    records
        .into_iter()
        .map(|(item_id, r)| {
            let mut options: Vec<(String, String)> = r.options.into_iter().collect();
            options.sort_by(|a, b| {
                (a.0.parse::<u64>().ok(), &a.0).cmp(&(b.0.parse::<u64>().ok(), &b.0))
            });
            let item = ItemSpec {
                item_id,
                question: r.question,
                options_count: r.options_count.unwrap_or(options.len()),
                options,
                ordinal: r.ordinal,
                demographic: r.demographic,
            };
            item.check()?;
            Ok(item)
        })
        .collect()
}

/// Writes items in the shape [`load_items`] reads.
pub fn save_items(items: &[ItemSpec]) -> Vec<u8> {
    let records: BTreeMap<&str, ItemRecord> = items
        .iter()
        .map(|i| {
            let record = ItemRecord {
                question: i.question.clone(),
                options: i.options.iter().cloned().collect(),
                demographic: i.demographic,
                ordinal: i.ordinal,
                options_count: Some(i.options_count),
            };
            (i.item_id.as_str(), record)
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&records).expect("items serialize");
    out.push(b'\n');
    out
}

/// Answers of one agent bank: respondent -> item -> option code.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResponseTable {
    pub bank_id: String,
    pub answers: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ResponseError {
    #[error("bank {bank}: malformed CSV: {source}")]
    Csv { bank: String, source: csv::Error },
    #[error("bank {bank}: malformed JSON: {source}")]
    Json { bank: String, source: serde_json::Error },
    #[error("bank {bank}: unknown item {item}")]
    UnknownItem { bank: String, item: String },
    #[error("bank {bank}: code {code:?} is not an option of item {item}")]
    UnknownCode { bank: String, item: String, code: String },
    #[error("bank {bank}: respondent {respondent} answered item {item} twice with different codes")]
    Conflict { bank: String, respondent: String, item: String },
}

#[derive(Deserialize)]
struct Row {
    respondent_id: String,
    item_id: String,
    code: String,
}

impl ResponseTable {
    pub fn new(bank_id: impl Into<String>) -> Self {
        ResponseTable { bank_id: bank_id.into(), answers: BTreeMap::new() }
    }

    /// Records an answer after checking it against the item set.
    pub fn record(&mut self, items: &[ItemSpec], respondent: &str, item: &str, code: &str) -> Result<(), ResponseError> {
        let spec = items.iter().find(|i| i.item_id == item).ok_or_else(|| ResponseError::UnknownItem {
            bank: self.bank_id.clone(),
            item: item.into(),
        })?;
        let code = code.trim();
        if spec.code_index(code).is_none() {
            return Err(ResponseError::UnknownCode { bank: self.bank_id.clone(), item: item.into(), code: code.into() });
        }
        let row = self.answers.entry(respondent.into()).or_default();
        match row.get(item) {
            Some(existing) if existing != code => Err(ResponseError::Conflict {
                bank: self.bank_id.clone(),
                respondent: respondent.into(),
                item: item.into(),
            }),
            _ => {
                row.insert(item.into(), code.into());
                Ok(())
            }
        }
    }

    /// Reads CSV with header `respondent_id,item_id,code`.
    pub fn from_csv(bank_id: &str, reader: impl Read, items: &[ItemSpec]) -> Result<Self, ResponseError> {
        let mut table = ResponseTable::new(bank_id);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|source| ResponseError::Csv { bank: bank_id.into(), source })?;
            table.record(items, &row.respondent_id, &row.item_id, &row.code)?;
        }
        Ok(table)
    }

    /// Reads a JSON object `{respondent: {item: code}}`.
    pub fn from_json(bank_id: &str, bytes: &[u8], items: &[ItemSpec]) -> Result<Self, ResponseError> {
        let raw: BTreeMap<String, BTreeMap<String, String>> =
            serde_json::from_slice(bytes).map_err(|source| ResponseError::Json { bank: bank_id.into(), source })?;
        let mut table = ResponseTable::new(bank_id);
        for (respondent, row) in raw {
            for (item, code) in row {
                table.record(items, &respondent, &item, &code)?;
            }
        }
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["respondent_id", "item_id", "code"]).expect("in-memory write");
        for (respondent, row) in &self.answers {
            for (item, code) in row {
                w.write_record([respondent, item, code]).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn respondents(&self) -> usize {
        self.answers.len()
    }

    pub fn items(&self) -> BTreeSet<&str> {
        self.answers.values().flat_map(|r| r.keys().map(String::as_str)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ITEMS: &str = r#"{
        "CONFED": {
            "question": "Confidence in the executive branch?",
            "options": {"1": "A GREAT DEAL", "2": "ONLY SOME", "3": "HARDLY ANY"},
            "DEMOGRAPHIC": false, "ordinal": true, "options_count": 3
        },
        "WLTH": {
            "question": "Rich or poor?",
            "options": {"1": "1 - RICH", "2": "2", "3": "3", "4": "4", "5": "5", "6": "6", "7": "7", "8": "8", "9": "9", "10": "10 - POOR"},
            "DEMOGRAPHIC": false, "ordinal": true, "options_count": 10
        },
        "CAPPUN": {
            "question": "Death penalty?",
            "options": {"1": "FAVOR", "2": "OPPOSE"},
            "DEMOGRAPHIC": false, "ordinal": false, "options_count": 2
        },
        "AGE": {"question": "Age band", "options": {"1": "young", "2": "old"}, "DEMOGRAPHIC": true, "ordinal": true, "options_count": 2}
    }"#;

    #[test]
    fn loads_item_records() {
        let items = load_items(ITEMS.as_bytes()).unwrap();
        let ids: Vec<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
        assert_eq!(ids, ["AGE", "CAPPUN", "CONFED", "WLTH"]);
        assert!(items[0].demographic);
        assert_eq!(items[2].options_count, 3);
        assert_eq!(items[3].codes().last(), Some("10"));
        assert_eq!(items[3].code_index("10"), Some(9));
        assert_eq!(load_items(&save_items(&items)).unwrap(), items);
    }

    #[test]
    fn rejects_bad_metadata() {
        let count = r#"{"X": {"options": {"1": "a", "2": "b"}, "ordinal": true, "options_count": 3}}"#;
        assert!(matches!(load_items(count.as_bytes()), Err(ItemError::CountMismatch { .. })));
        let gap = r#"{"X": {"options": {"1": "a", "3": "b"}, "ordinal": true, "options_count": 2}}"#;
        assert!(matches!(load_items(gap.as_bytes()), Err(ItemError::NonContiguous(_))));
        let nominal_gap = r#"{"X": {"options": {"1": "a", "3": "b"}, "ordinal": false}}"#;
        assert!(load_items(nominal_gap.as_bytes()).is_ok());
        let single = r#"{"X": {"options": {"1": "a"}, "ordinal": false}}"#;
        assert!(matches!(load_items(single.as_bytes()), Err(ItemError::TooFewOptions(_))));
    }

    #[test]
    fn csv_and_json_agree() {
        let items = load_items(ITEMS.as_bytes()).unwrap();
        let csv = "respondent_id,item_id,code\nr1,CONFED,2\nr1,CAPPUN,1\nr2, CONFED ,3\n";
        let a = ResponseTable::from_csv("D", csv.as_bytes(), &items).unwrap();
        let json = r#"{"r1": {"CONFED": "2", "CAPPUN": "1"}, "r2": {"CONFED": "3"}}"#;
        let b = ResponseTable::from_json("D", json.as_bytes(), &items).unwrap();
        assert_eq!(a, b);
        assert_eq!(ResponseTable::from_csv("D", a.to_csv().as_bytes(), &items).unwrap(), a);
    }

    #[test]
    fn rejects_bad_answers() {
        let items = load_items(ITEMS.as_bytes()).unwrap();
        let unknown_code = "respondent_id,item_id,code\nr1,CONFED,4\n";
        assert!(matches!(
            ResponseTable::from_csv("D", unknown_code.as_bytes(), &items),
            Err(ResponseError::UnknownCode { .. })
        ));
        let unknown_item = "respondent_id,item_id,code\nr1,NOPE,1\n";
        assert!(matches!(
            ResponseTable::from_csv("D", unknown_item.as_bytes(), &items),
            Err(ResponseError::UnknownItem { .. })
        ));
        let conflict = "respondent_id,item_id,code\nr1,CONFED,1\nr1,CONFED,2\n";
        assert!(matches!(
            ResponseTable::from_csv("D", conflict.as_bytes(), &items),
            Err(ResponseError::Conflict { .. })
        ));
    }
}
