//! Frames and stratum summaries as CSV files.

use std::path::Path;

use multiwave_core::{SamplingFrame, StratumSummary};

use crate::error::{Error, Result};

/// Reads a numeric CSV with a header row into a frame, one column per field.
/// Empty or non-numeric cells are rejected.
pub fn read_frame(path: &Path) -> Result<SamplingFrame> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let names: Vec<String> = r.headers().map_err(|e| Error::csv(path, e))?.iter().map(String::from).collect();
    if names.is_empty() {
        return Err(Error::Config(format!("{}: no columns", path.display())));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Config(format!("{}: row {}, column `{}`: `{field}` is not a number", path.display(), line + 2, names[j]))
            })?;
            cols[j].push(v);
        }
    }
    let mut frame = SamplingFrame::new(cols[0].len());
    for (name, col) in names.into_iter().zip(cols) {
        frame.add_column(name, col)?;
    }
    Ok(frame)
}

/// Writes every frame column (in name order), plus `stratum` when the frame
/// is stratified.
pub fn write_frame(frame: &SamplingFrame, path: &Path) -> Result<()> {
    let names: Vec<&str> = frame.column_names().collect();
    let cols: Vec<&[f64]> = names.iter().map(|n| frame.column(n)).collect::<multiwave_core::Result<_>>()?;
    let strata = frame.strata().ok();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header: Vec<&str> = names.clone();
    if strata.is_some() {
        header.push("stratum");
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for u in 0..frame.n_units() {
        let mut rec: Vec<String> = cols.iter().map(|c| c[u].to_string()).collect();
        if let Some(s) = strata {
            rec.push((s.label(u) + 1).to_string());
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads stratum summaries from a CSV with columns `stratum,N,sd_p1..sd_pP`.
/// Stratum identifiers are kept in file order; an optional `n_sampled`
/// column fills `already_sampled`.
pub fn read_summaries(path: &Path) -> Result<(Vec<String>, Vec<StratumSummary>)> {
    let bad = |m: String| Error::Config(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| Error::csv(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let stratum_col = find("stratum").ok_or_else(|| bad("missing `stratum` column".into()))?;
    let n_col = find("N").ok_or_else(|| bad("missing `N` column".into()))?;
    let sampled_col = find("n_sampled");
    let mut sd_cols = Vec::new();
    while let Some(c) = find(&format!("sd_p{}", sd_cols.len() + 1)) {
        sd_cols.push(c);
    }
    if sd_cols.is_empty() {
        return Err(bad("no `sd_p1` column".into()));
    }
    let mut ids = Vec::new();
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let get = |c: usize| rec.get(c).unwrap_or("").trim();
        let int = |c: usize| get(c).parse::<usize>().map_err(|_| bad(format!("row {}: `{}` is not a count", k + 2, get(c))));
        let pop = int(n_col)?;
        let sds = sd_cols
            .iter()
            .map(|&c| get(c).parse::<f64>().map_err(|_| bad(format!("row {}: `{}` is not a number", k + 2, get(c)))))
            .collect::<Result<Vec<_>>>()?;
        let mut s = StratumSummary::new(k, pop, sds);
        if let Some(c) = sampled_col {
            s.already_sampled = int(c)?;
        }
        s.validate()?;
        ids.push(get(stratum_col).to_string());
        out.push(s);
    }
    if out.is_empty() {
        return Err(bad("no strata".into()));
    }
    Ok((ids, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use multiwave_core::{build_strata, Binning, StratRule, StratVar};

    #[test]
    fn frame_survives_a_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let mut frame = SamplingFrame::new(3)
            .with_column("x", vec![0.1, -2.5, 1e-7])
            .unwrap()
            .with_column("y", vec![1.0, 0.0, 1.0])
            .unwrap();
        write_frame(&frame, &path).unwrap();
        assert_eq!(read_frame(&path).unwrap(), frame);
        build_strata(&mut frame, &StratRule { min_stratum_size: 1, ..StratRule::new(vec![StratVar::new("y", Binning::Binary)]) }).unwrap();
        write_frame(&frame, &path).unwrap();
        let back = read_frame(&path).unwrap();
        assert_eq!(back.column("stratum").unwrap(), &[2.0, 1.0, 2.0]);
    }

    #[test]
    fn summaries_parse_and_reject_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "stratum,N,sd_p1,sd_p2\na,100,3,1\nb,50,1,2\n").unwrap();
        let (ids, s) = read_summaries(&path).unwrap();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(s[1].pop_size, 50);
        assert_eq!(s[1].sd_by_param, [1.0, 2.0]);
        std::fs::write(&path, "stratum,N,sd_p1\na,ten,3\n").unwrap();
        assert_eq!(read_summaries(&path).unwrap_err().exit_code(), 2);
        std::fs::write(&path, "stratum,N\na,10\n").unwrap();
        assert!(read_summaries(&path).is_err());
    }
}
