//! Fringe CSV files: header `phase_pi,p_D,trials`, an optional trailing
//! `p_D_exact` column with noiseless probabilities, and leading `#` comment
//! lines for provenance metadata.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::Fringe;

/// A fringe with the optional noiseless column and comment lines.
#[derive(Clone, Debug, PartialEq)]
pub struct FringeFile {
    pub fringe: Fringe,
    pub exact: Option<Vec<f64>>,
    /// Comment lines without the leading `#`.
    pub comments: Vec<String>,
}

impl FringeFile {
    pub fn new(fringe: Fringe) -> Self {
        Self { fringe, exact: None, comments: Vec::new() }
    }
}

pub fn write_fringe_csv<W: Write>(mut out: W, file: &FringeFile) -> Result<()> {
    for c in &file.comments {
        writeln!(out, "# {c}")?;
    }
    let fr = &file.fringe;
    if let Some(exact) = &file.exact {
        if exact.len() != fr.len() {
            return Err(Error::Format("exact column length differs from the fringe".into()));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    let mut header = vec!["phase_pi", "p_D", "trials"];
    if file.exact.is_some() {
        header.push("p_D_exact");
    }
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..fr.len() {
        let mut row = vec![fr.phases()[k].to_string(), fr.p_d()[k].to_string(), fr.trials().to_string()];
        if let Some(exact) = &file.exact {
            row.push(exact[k].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fringe_csv<R: Read>(input: R) -> Result<FringeFile> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let comments: Vec<String> =
        text.lines().take_while(|l| l.starts_with('#')).map(|l| l.trim_start_matches('#').trim().to_string()).collect();

    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let with_exact = match names.as_slice() {
        ["phase_pi", "p_D", "trials"] => false,
        ["phase_pi", "p_D", "trials", "p_D_exact"] => true,
        _ => {
            return Err(Error::Format(format!(
                "expected header `phase_pi,p_D,trials[,p_D_exact]`, found `{}`",
                names.join(",")
            )))
        }
    };

    let (mut phases, mut p_d, mut exact) = (Vec::new(), Vec::new(), Vec::new());
    let mut trials: Option<u32> = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2 + comments.len();
        let rec = rec.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .ok_or_else(|| Error::Format(format!("line {line}: missing column {j}")))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("line {line}: {e}")))
        };
        phases.push(num(0)?);
        p_d.push(num(1)?);
        let t: u32 =
            rec.get(2).unwrap_or_default().parse().map_err(|e| Error::Format(format!("line {line}: trials: {e}")))?;
        match trials {
            None => trials = Some(t),
            Some(prev) if prev != t => {
                return Err(Error::Format(format!("line {line}: trials {t} differs from {prev}")))
            }
            _ => {}
        }
        if with_exact {
            exact.push(num(3)?);
        }
    }
    let trials = trials.ok_or_else(|| Error::Format("no data rows".into()))?;
    let fringe = Fringe::new(phases, p_d, trials).map_err(|e| Error::Format(e.to_string()))?;
    Ok(FringeFile { fringe, exact: with_exact.then_some(exact), comments })
}
