use std::io::Read;
use std::path::Path;

use super::{validate_dataset, AnalysisDataset, Arm, StudyConfig, SubjectRecord};
use crate::error::{Result, WrError};

const REQUIRED: [&str; 4] = ["arm", "time", "event", "y2"];

/// Column selection for [`read_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Covariate columns to keep, by header name. `None` keeps every column
    /// other than the four required ones, in file order.
    pub covariates: Option<Vec<String>>,
}

pub fn read_csv(path: impl AsRef<Path>, config: StudyConfig, opts: &CsvOptions) -> Result<AnalysisDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv_from_reader(file, config, opts)
}

/// Parse `arm,time,event,y2[,x1..xk]` records. An empty `y2` cell or the
/// token `NA` marks the second endpoint as missing. Rows are numbered from 1,
/// excluding the header.
pub fn read_csv_from_reader<R: Read>(reader: R, config: StudyConfig, opts: &CsvOptions) -> Result<AnalysisDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(0, "<header>", e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();

    let mut idx = [0usize; 4];
    for (k, name) in REQUIRED.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(0, name, "required column missing from header".into()))?;
    }
    let cov_cols: Vec<(usize, String)> = match &opts.covariates {
        Some(names) => names
            .iter()
            .map(|n| {
                let lower = n.to_ascii_lowercase();
                headers
                    .iter()
                    .position(|h| *h == lower)
                    .map(|i| (i, lower))
                    .ok_or_else(|| parse_err(0, n, "covariate column not found".into()))
            })
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !REQUIRED.contains(&h.as_str()))
            .map(|(i, h)| (i, h.clone()))
            .collect(),
    };

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 1;
        let row = row.map_err(|e| parse_err(line, "<row>", e.to_string()))?;
        let cell = |i: usize| row.get(i).unwrap_or("");

        let arm = match cell(idx[0]).to_ascii_lowercase().as_str() {
            "a" => Arm::A,
            "b" => Arm::B,
            other => return Err(parse_err(line, "arm", format!("expected `a` or `b`, got `{other}`"))),
        };
        let time = parse_f64(cell(idx[1]), line, "time")?;
        let event = match cell(idx[2]) {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, "event", format!("expected 0 or 1, got `{other}`"))),
        };
        let y2 = match cell(idx[3]) {
            "" | "NA" | "na" => None,
            s => Some(parse_f64(s, line, "y2")?),
        };
        let covariates = cov_cols
            .iter()
            .map(|(i, name)| parse_f64(cell(*i), line, name))
            .collect::<Result<Vec<_>>>()?;
        records.push(SubjectRecord {
            arm,
            y1_obs: time,
            delta1: event,
            y2,
            covariates,
        });
    }
    validate_dataset(config, records)
}

/// Names of the covariate columns [`read_csv`] would keep.
pub fn covariate_names(header_line: &str) -> Vec<String> {
    header_line
        .split(',')
        .map(|h| h.trim().to_ascii_lowercase())
        .filter(|h| !REQUIRED.contains(&h.as_str()))
        .collect()
}

fn parse_f64(s: &str, row: usize, column: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(row, column, format!("`{s}` is not a number")))
}

fn parse_err(row: usize, column: &str, message: String) -> WrError {
    WrError::Parse {
        row,
        column: column.to_string(),
        message,
    }
}
