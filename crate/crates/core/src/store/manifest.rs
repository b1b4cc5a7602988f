//! Dataset manifests.
//!
//! Plain UTF-8 text, one directive per line:
//!
//! ```text
//! metric map|ukbench
//! db <id>
//! query <id> [self] <relevant_id>+
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Without a `metric`
//! line the metric is MAP.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    MeanAveragePrecision,
    /// UKBench score: relevant items among the top 4, averaged over queries.
    FourTimesRecallAt4,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::MeanAveragePrecision => "map",
            MetricKind::FourTimesRecallAt4 => "ukbench",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub relevant: Vec<String>,
    /// Drop the query's own id from its ranked list.
    pub exclude_self: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub database_ids: Vec<String>,
    pub queries: Vec<Query>,
    pub metric: MetricKind,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut db = HashSet::new();
        for id in &self.database_ids {
            if !db.insert(id.as_str()) {
                return Err(Error::ManifestValidation(format!("duplicate database id {id:?}")));
            }
        }
        let mut seen = HashSet::new();
        for q in &self.queries {
            if !seen.insert(q.id.as_str()) {
                return Err(Error::ManifestValidation(format!("duplicate query {:?}", q.id)));
            }
            if q.relevant.is_empty() {
                return Err(Error::ManifestValidation(format!("query {:?} has no relevant ids", q.id)));
            }
            if let Some(missing) = q.relevant.iter().find(|r| !db.contains(r.as_str())) {
                return Err(Error::ManifestValidation(format!(
                    "query {:?}: relevant id {missing:?} is not a database entry",
                    q.id
                )));
            }
            if self.metric == MetricKind::FourTimesRecallAt4 && q.relevant.len() != 4 {
                return Err(Error::ManifestValidation(format!(
                    "query {:?} has {} relevant ids; the ukbench metric requires exactly 4",
                    q.id,
                    q.relevant.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_manifest_str(text: &str) -> Result<DatasetManifest> {
    let mut metric = None;
    let mut database_ids = Vec::new();
    let mut queries: Vec<Query> = Vec::new();
    let mut query_lines = std::collections::HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |detail: String| Error::Manifest { line: line_no, detail };
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("metric") => {
                if metric.is_some() {
                    return Err(err("metric given twice".into()));
                }
                metric = Some(match (tokens.next(), tokens.next()) {
                    (Some("map"), None) => MetricKind::MeanAveragePrecision,
                    (Some("ukbench"), None) => MetricKind::FourTimesRecallAt4,
                    _ => return Err(err(format!("expected `metric map|ukbench`, got {line:?}"))),
                });
            }
            Some("db") => match (tokens.next(), tokens.next()) {
                (Some(id), None) => database_ids.push(id.to_string()),
                _ => return Err(err("expected `db <id>`".into())),
            },
            Some("query") => {
                let id = tokens.next().ok_or_else(|| err("query line lacks an id".into()))?;
                let mut rest: Vec<&str> = tokens.collect();
                let exclude_self = rest.first() == Some(&"self");
                if exclude_self {
                    rest.remove(0);
                }
                if rest.is_empty() {
                    return Err(err(format!("query {id:?} lists no relevant ids")));
                }
                if let Some(prev) = query_lines.insert(id.to_string(), line_no) {
                    return Err(err(format!("duplicate query {id:?} (first on line {prev})")));
                }
                queries.push(Query {
                    id: id.to_string(),
                    relevant: rest.iter().map(|s| s.to_string()).collect(),
                    exclude_self,
                });
            }
            Some(other) => return Err(err(format!("unknown directive {other:?}"))),
            None => unreachable!(),
        }
    }
    let manifest = DatasetManifest {
        database_ids,
        queries,
        metric: metric.unwrap_or(MetricKind::MeanAveragePrecision),
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_valid_manifest() {
        let m = parse_manifest_str("db a\ndb b\nquery q a\n").unwrap();
        assert_eq!(m.database_ids, vec!["a", "b"]);
        assert_eq!(m.queries.len(), 1);
        assert_eq!(m.queries[0].relevant, vec!["a"]);
        assert!(!m.queries[0].exclude_self);
        assert_eq!(m.metric, MetricKind::MeanAveragePrecision);
    }

    #[test]
    fn ukbench_requires_four_relevants() {
        let text = "metric ukbench\ndb a\ndb b\ndb c\ndb d\nquery a self a b c\n";
        assert!(matches!(parse_manifest_str(text), Err(Error::ManifestValidation(_))));
        let text = "metric ukbench\ndb a\ndb b\ndb c\ndb d\nquery a a b c d\n";
        assert_eq!(parse_manifest_str(text).unwrap().metric, MetricKind::FourTimesRecallAt4);
    }

    #[test]
    fn self_flag_passes_through() {
        let m = parse_manifest_str("db a\ndb b\nquery a self a b\n").unwrap();
        assert!(m.queries[0].exclude_self);
        assert_eq!(m.queries[0].relevant, vec!["a", "b"]);
    }

    #[test]
    fn unknown_relevant_rejected() {
        assert!(parse_manifest_str("db a\nquery q zzz\n").is_err());
    }

    #[test]
    fn duplicate_query_rejected() {
        let e = parse_manifest_str("db a\nquery q a\nquery q a\n").unwrap_err();
        assert!(matches!(e, Error::Manifest { line: 3, .. }), "{e}");
    }

    #[test]
    fn db_lines_may_follow_queries_and_order_is_kept() {
        let m = parse_manifest_str("# comment\nquery q2 c\nquery q1 a\n\ndb c\ndb a\ndb b\n").unwrap();
        assert_eq!(m.database_ids, vec!["c", "a", "b"]);
        assert_eq!(m.queries.iter().map(|q| q.id.as_str()).collect::<Vec<_>>(), vec!["q2", "q1"]);
    }

    #[test]
    fn malformed_lines() {
        assert!(parse_manifest_str("metric recall\n").is_err());
        assert!(parse_manifest_str("db\n").is_err());
        assert!(parse_manifest_str("db a b\n").is_err());
        assert!(parse_manifest_str("db a\nquery q self\n").is_err());
        assert!(parse_manifest_str("frobnicate\n").is_err());
        assert!(parse_manifest_str("db a\ndb a\nquery q a\n").is_err());
    }
}
