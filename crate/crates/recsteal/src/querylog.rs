//! Query logs as CSV: `query_index,user_id,item_ids`, item ids joined by `|`.

use std::path::Path;

use recsteal_core::{IdMap, QueryRecord};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRow {
    pub query_index: usize,
    pub user_id: String,
    pub item_ids: String,
}

fn raw(ids: &IdMap, i: usize) -> String {
    ids.raw(i).map_or_else(|| i.to_string(), str::to_string)
}

pub fn rows(log: &[QueryRecord], users: &IdMap, items: &IdMap) -> Vec<LogRow> {
    log.iter()
        .map(|r| LogRow {
            query_index: r.index,
            user_id: raw(users, r.user),
            item_ids: r
                .items
                .iter()
                .map(|&i| raw(items, i))
                .collect::<Vec<_>>()
                .join("|"),
        })
        .collect()
}

pub fn write(path: &Path, rows: &[LogRow]) -> Result<()> {
    let err = |e| AppError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<LogRow>> {
    let err = |e| AppError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(err)
}
