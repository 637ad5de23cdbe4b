use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataItem, Registry, SubjectId};
use crate::{Error, Result};

/// Column mapping for a subject-tagged CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Feature columns in model-input order. Empty selects every column named
    /// `f<integer>`, ordered by the integer.
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub subject_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            feature_columns: Vec::new(),
            label_column: "label".into(),
            subject_column: "subject".into(),
        }
    }
}

impl CsvSchema {
    fn resolve(&self, header: &csv::StringRecord, path: &Path) -> Result<(Vec<usize>, usize, usize)> {
        let columns: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let find = |name: &str, role: &str| {
            columns.get(name).copied().ok_or_else(|| Error::Csv {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing {role} column `{name}`"),
            })
        };
        let subject = find(&self.subject_column, "subject")?;
        let label = find(&self.label_column, "label")?;
        let features = if self.feature_columns.is_empty() {
            let mut numbered: Vec<(u64, usize)> = header
                .iter()
                .enumerate()
                .filter_map(|(i, h)| {
                    let h = h.trim();
                    h.strip_prefix('f')
                        .filter(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
                        .and_then(|rest| rest.parse::<u64>().ok())
                        .map(|n| (n, i))
                })
                .collect();
            numbered.sort_unstable();
            numbered.into_iter().map(|(_, i)| i).collect::<Vec<_>>()
        } else {
            self.feature_columns
                .iter()
                .map(|c| find(c, "feature"))
                .collect::<Result<Vec<_>>>()?
        };
        if features.is_empty() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: 1,
                message: "no feature columns".into(),
            });
        }
        Ok((features, label, subject))
    }
}

/// Loads a subject-tagged CSV file (header row, comma separated, LF or CRLF).
///
/// `num_classes` defaults to one more than the largest label seen (at least 2).
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema, num_classes: Option<usize>) -> Result<Registry> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema, num_classes, path)
}

/// Parses CSV from any reader; `source` only labels error messages.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, num_classes: Option<usize>, source: &Path) -> Result<Registry> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let err = |line: u64, message: String| Error::Csv {
        path: source.to_path_buf(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let (feature_cols, label_col, subject_col) = schema.resolve(&header, source)?;

    let mut items = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(err(line, e.to_string()));
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let features = feature_cols
            .iter()
            .map(|&i| {
                field(i)
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(line, format!("non-numeric feature `{}` in column `{}`", field(i), &header[i])))
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = field(label_col)
            .parse::<usize>()
            .map_err(|_| err(line, format!("invalid label `{}`", field(label_col))))?;
        let subject = field(subject_col)
            .parse::<u64>()
            .map_err(|_| err(line, format!("invalid subject `{}`", field(subject_col))))?;
        items.push(DataItem {
            features,
            label,
            subject: SubjectId(subject),
        });
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no data rows", source.display())));
    }
    let classes = match num_classes {
        Some(c) => c,
        None => (items.iter().map(|i| i.label).max().unwrap_or(0) + 1).max(2),
    };
    Registry::new(feature_cols.len(), classes, items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Registry> {
        read_csv(text.as_bytes(), &CsvSchema::default(), None, Path::new("mem.csv"))
    }

    #[test]
    fn well_formed_three_rows() {
        let reg = parse("f0,f1,label,subject\n0.5,1,0,3\n-1,2.5,1,3\n0,0,1,4\n").unwrap();
        assert_eq!(reg.total_items(), 3);
        assert_eq!(reg.d_in(), 2);
        assert_eq!(reg.num_classes(), 2);
        assert_eq!(reg.subject_count(), 2);
    }

    #[test]
    fn crlf_and_reordered_columns() {
        let reg = parse("subject,f1,label,f0\r\n7,2.0,1,1.0\r\n").unwrap();
        let item = reg.iter_items().next().unwrap();
        assert_eq!(item.features, vec![1.0, 2.0]);
        assert_eq!(item.subject, SubjectId(7));
    }

    #[test]
    fn non_numeric_feature_names_line() {
        let e = parse("f0,label,subject\n1.0,0,1\nabc,0,1\n").unwrap_err();
        match e {
            Error::Csv { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_subject_column_is_fatal() {
        let e = parse("f0,label\n1.0,0\n").unwrap_err();
        assert!(e.to_string().contains("subject"), "{e}");
    }

    #[test]
    fn ragged_row_reports_line() {
        let e = parse("f0,label,subject\n1.0,0,1\n1.0,0\n").unwrap_err();
        assert!(matches!(e, Error::Csv { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn explicit_feature_columns() {
        let schema = CsvSchema {
            feature_columns: vec!["x".into()],
            label_column: "y".into(),
            subject_column: "who".into(),
        };
        let reg = read_csv("x,y,who,ignored\n3.5,1,2,zzz\n".as_bytes(), &schema, Some(4), Path::new("m")).unwrap();
        assert_eq!(reg.num_classes(), 4);
        assert_eq!(reg.d_in(), 1);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(parse("f0,label,subject\n"), Err(Error::EmptyDataset(_))));
    }
}
