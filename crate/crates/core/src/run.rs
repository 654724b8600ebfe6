//! Run files: ranked results per query as tab-separated `rank, chunk_id,
//! score` lines. Multi-query files separate blocks with `# <query_id>`.

use std::fmt::Write as _;
use std::path::Path;

use crate::bm25::{RankedEntry, RankedList};
use crate::error::{Error, Result};

pub fn format_run(lists: &[RankedList]) -> String {
    let mut out = String::new();
    for list in lists {
        let _ = writeln!(out, "# {}", list.query_id);
        for (i, e) in list.entries.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}", i + 1, e.chunk_id, e.score);
        }
    }
    out
}

pub fn write_run(path: &Path, lists: &[RankedList]) -> Result<()> {
    std::fs::write(path, format_run(lists)).map_err(|e| Error::io(path, e))
}

pub fn parse_run(text: &str, source: &Path) -> Result<Vec<RankedList>> {
    let mut lists: Vec<RankedList> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let bad = |message: String| Error::MalformedRecord {
            path: source.to_path_buf(),
            line: n + 1,
            message,
        };
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(id) = line.strip_prefix('#') {
            lists.push(RankedList {
                query_id: id.trim().to_string(),
                entries: Vec::new(),
            });
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let rank: usize = fields[0].trim().parse().map_err(|_| bad(format!("bad rank `{}`", fields[0])))?;
        let score: f64 = fields[2].trim().parse().map_err(|_| bad(format!("bad score `{}`", fields[2])))?;
        if lists.is_empty() {
            lists.push(RankedList {
                query_id: String::new(),
                entries: Vec::new(),
            });
        }
        let list = lists.last_mut().unwrap();
        if rank != list.entries.len() + 1 {
            return Err(bad(format!("rank {rank} out of sequence")));
        }
        list.entries.push(RankedEntry {
            chunk_id: fields[1].to_string(),
            score,
        });
    }
    Ok(lists)
}

pub fn read_run(path: &Path) -> Result<Vec<RankedList>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let lists = vec![
            RankedList {
                query_id: "q1".into(),
                entries: vec![
                    RankedEntry { chunk_id: "a#0000".into(), score: 2.5 },
                    RankedEntry { chunk_id: "b#0001".into(), score: 0.1 },
                ],
            },
            RankedList {
                query_id: "q2".into(),
                entries: vec![],
            },
        ];
        let text = format_run(&lists);
        assert!(text.starts_with("# q1\n1\ta#0000\t2.5\n"));
        assert_eq!(parse_run(&text, Path::new("x")).unwrap(), lists);
    }

    #[test]
    fn headerless_single_query() {
        let lists = parse_run("1\tc1\t0.5\n2\tc2\t0.25\n", Path::new("x")).unwrap();
        assert_eq!(lists.len(), 1);
        assert_eq!(lists[0].chunk_ids(), vec!["c1", "c2"]);
    }

    #[test]
    fn rejects_gaps() {
        let err = parse_run("# q\n1\tc\t1\n3\td\t0\n", Path::new("r.tsv")).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 3, .. }));
    }
}
