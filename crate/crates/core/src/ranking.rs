//! Ranked lists of individuals and their JSONL interchange format.
//!
//! One line per query:
//! `{"query": [individual, encounter], "ranking": [[individual, score], ...]}`.
//! Array order is the ranking; scores are matcher-specific and lower is better.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A query encounter, identified by its true individual and encounter id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueryKey(pub String, pub String);

impl QueryKey {
    pub fn new(individual: impl Into<String>, encounter: impl Into<String>) -> Self {
        Self(individual.into(), encounter.into())
    }

    pub fn individual(&self) -> &str {
        &self.0
    }

    pub fn encounter(&self) -> &str {
        &self.1
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankedList {
    entries: Vec<(String, f64)>,
}

impl RankedList {
    /// Sorts ascending by score, ties by identifier.
    pub fn from_scores(scores: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut entries: Vec<(String, f64)> = scores.into_iter().collect();
        entries.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Self { entries }
    }

    /// Keeps the given order.
    pub fn from_ordered(entries: Vec<(String, f64)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Zero-based position of `individual`.
    pub fn rank_of(&self, individual: &str) -> Option<usize> {
        self.entries.iter().position(|(id, _)| id == individual)
    }

    pub fn in_top(&self, individual: &str, k: usize) -> bool {
        self.entries.iter().take(k).any(|(id, _)| id == individual)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}

/// Rankings for a set of queries, keyed and iterated in query order.
pub type Rankings = BTreeMap<QueryKey, RankedList>;

#[derive(Serialize, Deserialize)]
struct DumpLine {
    query: QueryKey,
    ranking: RankedList,
}

pub fn write_rankings<W: Write>(rankings: &Rankings, mut w: W) -> Result<()> {
    for (query, ranking) in rankings {
        let line = DumpLine {
            query: query.clone(),
            ranking: ranking.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_rankings<R: BufRead>(reader: R) -> Result<Rankings> {
    let mut out = Rankings::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DumpLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(parsed.query.clone(), parsed.ranking).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate query {:?}", parsed.query),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorting_and_ties() {
        let r = RankedList::from_scores(vec![
            ("b".to_string(), 0.0),
            ("c".to_string(), -1.0),
            ("a".to_string(), 0.0),
        ]);
        assert_eq!(r.ids().collect::<Vec<_>>(), ["c", "a", "b"]);
        assert_eq!(r.rank_of("b"), Some(2));
        assert!(r.in_top("a", 2));
        assert!(!r.in_top("b", 2));
    }

    #[test]
    fn dump_format() {
        let mut rk = Rankings::new();
        rk.insert(
            QueryKey::new("a", "e1"),
            RankedList::from_ordered(vec![("a".into(), -2.5), ("b".into(), 0.0)]),
        );
        let mut buf = Vec::new();
        write_rankings(&rk, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "{\"query\":[\"a\",\"e1\"],\"ranking\":[[\"a\",-2.5],[\"b\",0.0]]}\n");
        assert_eq!(read_rankings(buf.as_slice()).unwrap(), rk);
    }
}
