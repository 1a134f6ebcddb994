//! Delimited interaction logs: `user_id, item_id[, rating, timestamp, ...]`.

use std::fs;
use std::path::Path;

use recsteal_core::InteractionDataset;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Tsv,
    /// MovieLens `::`-separated `.dat` files.
    Dat,
}

impl Format {
    /// `.csv` -> csv, `.tsv` / `.txt` / `.data` -> tsv, `.dat` -> dat.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "csv" => Some(Format::Csv),
            "tsv" | "txt" | "data" => Some(Format::Tsv),
            "dat" => Some(Format::Dat),
            _ => None,
        }
    }

    pub fn delimiter(self) -> &'static str {
        match self {
            Format::Csv => ",",
            Format::Tsv => "\t",
            Format::Dat => "::",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadOptions {
    pub format: Option<Format>,
    /// Overrides the format's delimiter.
    pub delimiter: Option<String>,
    /// `None` detects a header from its column names.
    pub header: Option<bool>,
}

const USER_COLUMNS: &[&str] = &["user", "user_id", "userid", "uid", "users", "customer_id"];
const ITEM_COLUMNS: &[&str] = &[
    "item",
    "item_id",
    "itemid",
    "iid",
    "items",
    "movie",
    "movie_id",
    "movieid",
    "product_id",
    "productid",
    "app_id",
];

fn looks_like_header(fields: &[&str]) -> bool {
    let norm = |s: &str| s.trim().trim_matches('"').to_ascii_lowercase();
    fields.len() >= 2
        && USER_COLUMNS.contains(&norm(fields[0]).as_str())
        && ITEM_COLUMNS.contains(&norm(fields[1]).as_str())
}

pub fn load_interactions(path: &Path, opts: &LoadOptions) -> Result<InteractionDataset> {
    let format = opts
        .format
        .or_else(|| Format::from_path(path))
        .unwrap_or(Format::Csv);
    let delimiter = opts.delimiter.as_deref().unwrap_or(format.delimiter());
    if delimiter.is_empty() {
        return Err(AppError::Config("delimiter must not be empty".into()));
    }
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let pairs = if delimiter.len() == 1 {
        parse_delimited(path, &text, delimiter.as_bytes()[0], opts.header)?
    } else {
        parse_split(path, &text, delimiter, opts.header)?
    };
    Ok(InteractionDataset::from_raw_pairs(pairs)?)
}

type Pairs = Vec<(String, String)>;

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> AppError {
    AppError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn push_pair(path: &Path, line: usize, fields: &[&str], out: &mut Pairs) -> Result<()> {
    if fields.len() < 2 {
        return Err(malformed(
            path,
            line,
            "expected at least 2 columns (user, item)",
        ));
    }
    let (u, i) = (fields[0].trim(), fields[1].trim());
    if u.is_empty() || i.is_empty() {
        return Err(malformed(path, line, "empty user or item id"));
    }
    out.push((u.to_string(), i.to_string()));
    Ok(())
}

fn parse_delimited(path: &Path, text: &str, delimiter: u8, header: Option<bool>) -> Result<Pairs> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AppError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        // The reader's own line counter skips blank lines; count from the byte offset.
        let line = record.position().map_or(n + 1, |p| {
            let mut at = (p.byte() as usize).min(text.len());
            while at < text.len() && matches!(text.as_bytes()[at], b'\n' | b'\r') {
                at += 1;
            }
            text.as_bytes()[..at]
                .iter()
                .filter(|&&b| b == b'\n')
                .count()
                + 1
        });
        let fields: Vec<&str> = record.iter().collect();
        if fields.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if out.is_empty() && n == 0 && header.unwrap_or_else(|| looks_like_header(&fields)) {
            continue;
        }
        push_pair(path, line, &fields, &mut out)?;
    }
    Ok(out)
}

fn parse_split(path: &Path, text: &str, delimiter: &str, header: Option<bool>) -> Result<Pairs> {
    let mut out = Vec::new();
    let mut first = true;
    for (n, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(delimiter).collect();
        if first {
            first = false;
            if header.unwrap_or_else(|| looks_like_header(&fields)) {
                continue;
            }
        }
        push_pair(path, n + 1, &fields, &mut out)?;
    }
    Ok(out)
}

/// Writes `user_id,item_id` rows with the original identifiers.
pub fn write_interactions(path: &Path, ds: &InteractionDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let csv_err = |e| AppError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    w.write_record(["user_id", "item_id"]).map_err(csv_err)?;
    for (u, items) in ds.iter() {
        let uid = ds
            .user_ids()
            .raw(u)
            .map_or_else(|| u.to_string(), str::to_string);
        for &i in items {
            let iid = ds
                .item_ids()
                .raw(i)
                .map_or_else(|| i.to_string(), str::to_string);
            w.write_record([uid.as_str(), iid.as_str()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| AppError::io(path, e))
}
