//! Human-authored evaluation inputs: the error ledger, requirement scores
//! and the replaced-functions sidecar. All three are CSV with a header row.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    LedgerParseError { row: usize, message: String },
    #[error("row {row}: unknown error category {value:?}")]
    UnknownCategory { row: usize, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Fatal,
    Runtime,
    Content,
    MissingAdditional,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::Fatal,
        ErrorCategory::Runtime,
        ErrorCategory::Content,
        ErrorCategory::MissingAdditional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Fatal => "fatal",
            ErrorCategory::Runtime => "runtime",
            ErrorCategory::Content => "content",
            ErrorCategory::MissingAdditional => "missing_additional",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCategory {
    type Err = ();

    /// Case-insensitive; `/`, `-` and spaces are read as `_`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| match c {
                '/' | '-' | ' ' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        ErrorCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub run_id: String,
    /// Human-assigned key; rows sharing (run_id, mistake_id) are one mistake.
    pub mistake_id: String,
    pub category: ErrorCategory,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementScoreRecord {
    pub run_id: String,
    pub requirement_index: usize,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacedFunctionsRecord {
    pub run_id: String,
    pub replaced_functions: u32,
}

fn open(path: &Path) -> Result<std::fs::File, LedgerError> {
    std::fs::File::open(path).map_err(|source| LedgerError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads rows as string records, checking the header. Row numbers count the
/// header as row 1.
fn rows<R: Read>(
    reader: R,
    header: &[&str],
) -> Result<Vec<(usize, csv::StringRecord)>, LedgerError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| LedgerError::LedgerParseError {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(LedgerError::LedgerParseError {
            row: 1,
            message: format!("expected header `{}`", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| LedgerError::LedgerParseError {
            row,
            message: e.to_string(),
        })?;
        out.push((row, rec));
    }
    Ok(out)
}

fn non_empty(row: usize, field: &str, value: &str) -> Result<String, LedgerError> {
    if value.is_empty() {
        Err(LedgerError::LedgerParseError {
            row,
            message: format!("{field} must not be empty"),
        })
    } else {
        Ok(value.to_string())
    }
}

/// Parses an error ledger and collapses repeated (run_id, mistake_id) rows,
/// keeping the first.
pub fn parse_ledger<R: Read>(reader: R) -> Result<Vec<ErrorRecord>, LedgerError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (row, rec) in rows(reader, &["run_id", "mistake_id", "category", "description"])? {
        let run_id = non_empty(row, "run_id", &rec[0])?;
        let mistake_id = non_empty(row, "mistake_id", &rec[1])?;
        let category =
            rec[2]
                .parse::<ErrorCategory>()
                .map_err(|_| LedgerError::UnknownCategory {
                    row,
                    value: rec[2].to_string(),
                })?;
        let description = non_empty(row, "description", &rec[3])?;
        if seen.insert((run_id.clone(), mistake_id.clone())) {
            out.push(ErrorRecord {
                run_id,
                mistake_id,
                category,
                description,
            });
        }
    }
    Ok(out)
}

pub fn ingest_ledger(path: impl AsRef<Path>) -> Result<Vec<ErrorRecord>, LedgerError> {
    parse_ledger(open(path.as_ref())?)
}

pub fn parse_scores<R: Read>(reader: R) -> Result<Vec<RequirementScoreRecord>, LedgerError> {
    let mut seen: BTreeMap<(String, usize), u8> = BTreeMap::new();
    let mut out = Vec::new();
    for (row, rec) in rows(reader, &["run_id", "requirement_index", "value"])? {
        let bad = |message: String| LedgerError::LedgerParseError { row, message };
        let run_id = non_empty(row, "run_id", &rec[0])?;
        let requirement_index: usize =
            rec[1].parse().ok().filter(|&i| i >= 1).ok_or_else(|| {
                bad(format!(
                    "requirement_index {:?} is not a positive integer",
                    &rec[1]
                ))
            })?;
        let value: u8 = match &rec[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("value {other:?} must be 0 or 1"))),
        };
        match seen.get(&(run_id.clone(), requirement_index)) {
            Some(&prev) if prev == value => continue,
            Some(_) => {
                return Err(bad(format!(
                    "conflicting score for run {run_id} requirement {requirement_index}"
                )))
            }
            None => {}
        }
        seen.insert((run_id.clone(), requirement_index), value);
        out.push(RequirementScoreRecord {
            run_id,
            requirement_index,
            value,
        });
    }
    Ok(out)
}

pub fn ingest_scores(path: impl AsRef<Path>) -> Result<Vec<RequirementScoreRecord>, LedgerError> {
    parse_scores(open(path.as_ref())?)
}

pub fn parse_replaced_functions<R: Read>(
    reader: R,
) -> Result<Vec<ReplacedFunctionsRecord>, LedgerError> {
    let mut seen: BTreeMap<String, u32> = BTreeMap::new();
    let mut out = Vec::new();
    for (row, rec) in rows(reader, &["run_id", "replaced_functions"])? {
        let bad = |message: String| LedgerError::LedgerParseError { row, message };
        let run_id = non_empty(row, "run_id", &rec[0])?;
        let replaced_functions: u32 = rec[1]
            .parse()
            .map_err(|_| bad(format!("replaced_functions {:?} is not a count", &rec[1])))?;
        match seen.get(&run_id) {
            Some(&prev) if prev == replaced_functions => continue,
            Some(_) => return Err(bad(format!("conflicting count for run {run_id}"))),
            None => {}
        }
        seen.insert(run_id.clone(), replaced_functions);
        out.push(ReplacedFunctionsRecord {
            run_id,
            replaced_functions,
        });
    }
    Ok(out)
}

pub fn ingest_replaced_functions(
    path: impl AsRef<Path>,
) -> Result<Vec<ReplacedFunctionsRecord>, LedgerError> {
    parse_replaced_functions(open(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "run_id,mistake_id,category,description\n";

    #[test]
    fn same_mistake_counted_once() {
        let csv = format!(
            "{HEADER}run-01,orm-capitalization,runtime,lowercase model key\nrun-01,orm-capitalization,Runtime,lowercase model key again\n"
        );
        let recs = parse_ledger(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].category, ErrorCategory::Runtime);
        assert_eq!(recs[0].description, "lowercase model key");
    }

    #[test]
    fn same_mistake_in_different_runs_is_kept() {
        let csv = format!("{HEADER}a,m,fatal,x\nb,m,fatal,x\n");
        assert_eq!(parse_ledger(csv.as_bytes()).unwrap().len(), 2);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_ledger(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn unknown_category() {
        let csv = format!("{HEADER}a,m,fatal,x\na,n,syntax,y\n");
        match parse_ledger(csv.as_bytes()) {
            Err(LedgerError::UnknownCategory { row, value }) => {
                assert_eq!(row, 3);
                assert_eq!(value, "syntax");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn category_spellings() {
        for (s, c) in [
            ("FATAL", ErrorCategory::Fatal),
            ("Missing/Additional", ErrorCategory::MissingAdditional),
            ("missing-additional", ErrorCategory::MissingAdditional),
            (" content ", ErrorCategory::Content),
        ] {
            assert_eq!(s.parse::<ErrorCategory>(), Ok(c));
        }
    }

    #[test]
    fn malformed_rows_report_row_number() {
        let wrong_header = "run,mistake,category,description\n";
        assert!(matches!(
            parse_ledger(wrong_header.as_bytes()),
            Err(LedgerError::LedgerParseError { row: 1, .. })
        ));
        let short = format!("{HEADER}a,m,fatal,x\na,m\n");
        assert!(matches!(
            parse_ledger(short.as_bytes()),
            Err(LedgerError::LedgerParseError { row: 3, .. })
        ));
        let blank_desc = format!("{HEADER}a,m,fatal,\n");
        assert!(matches!(
            parse_ledger(blank_desc.as_bytes()),
            Err(LedgerError::LedgerParseError { row: 2, .. })
        ));
    }

    #[test]
    fn description_may_contain_commas_when_quoted() {
        let csv = format!("{HEADER}a,m,content,\"uses [0], not first()\"\n");
        assert_eq!(
            parse_ledger(csv.as_bytes()).unwrap()[0].description,
            "uses [0], not first()"
        );
    }

    #[test]
    fn scores_contract() {
        let ok = "run_id,requirement_index,value\na,1,1\na,2,0\na,2,0\n";
        assert_eq!(parse_scores(ok.as_bytes()).unwrap().len(), 2);
        for bad in [
            "run_id,requirement_index,value\na,1,2\n",
            "run_id,requirement_index,value\na,0,1\n",
            "run_id,requirement_index,value\na,1,1\na,1,0\n",
        ] {
            assert!(matches!(
                parse_scores(bad.as_bytes()),
                Err(LedgerError::LedgerParseError { .. })
            ));
        }
    }

    #[test]
    fn replaced_functions_contract() {
        let ok = "run_id,replaced_functions\na,3\nb,0\n";
        assert_eq!(parse_replaced_functions(ok.as_bytes()).unwrap().len(), 2);
        let bad = "run_id,replaced_functions\na,-1\n";
        assert!(parse_replaced_functions(bad.as_bytes()).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            ingest_ledger("/nonexistent/ledger.csv"),
            Err(LedgerError::Io { .. })
        ));
    }
}
