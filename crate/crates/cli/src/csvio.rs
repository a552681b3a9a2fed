//! CSV input and output. Lines starting with `#` carry provenance
//! (configuration hash and seed) and are skipped on input.

use std::io::Write;
use std::path::Path;

use scalebreak::montecarlo::MonteCarloResult;
use scalebreak::pipeline::PlotRow;
use scalebreak::synth::SampledPath;

use crate::CliError;

/// Relative tolerance on the spacing of a two-column input.
const SPACING_TOL: f64 = 1e-9;

/// Provenance lines written at the top of every output.
pub struct Stamp<'a> {
    pub command: &'a str,
    pub hash: &'a str,
    pub seed: u64,
}

impl Stamp<'_> {
    fn header(&self) -> String {
        format!("# scalebreak {}\n# config_sha256 {}\n# seed {}\n", self.command, self.hash, self.seed)
    }
}

fn is_header(cells: &[&str]) -> bool {
    let lower: Vec<String> = cells.iter().map(|c| c.to_ascii_lowercase()).collect();
    matches!(lower.iter().map(String::as_str).collect::<Vec<_>>()[..], ["x"] | ["t", "x"])
}

/// Read a path: one value per row, or two columns (t, x) on a uniform
/// grid whose spacing becomes the step. A leading `x` or `t,x` header is
/// allowed. Single-column input uses `default_delta`.
pub fn read_path(path: &Path, default_delta: f64) -> Result<SampledPath, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let mut width = None;
    let mut t = Vec::new();
    let mut x = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec.position().map_or(i as u64 + 1, |p| p.line());
        let cells: Vec<&str> = rec.iter().collect();
        if width.is_none() && is_header(&cells) {
            width = Some(cells.len());
            continue;
        }
        let w = *width.get_or_insert(cells.len());
        if cells.len() != w || !(1..=2).contains(&w) {
            return Err(bad(format!("row {row}: expected {w} column(s) of value or (t, x), found {}", cells.len())));
        }
        let mut nums = [0.0; 2];
        for (col, cell) in cells.iter().enumerate() {
            nums[col] = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {row}, column {}: '{cell}' is not a finite number", col + 1)))?;
        }
        if w == 2 {
            t.push(nums[0]);
            x.push(nums[1]);
        } else {
            x.push(nums[0]);
        }
    }
    if x.len() < 2 {
        return Err(bad(format!("need at least two observations, found {}", x.len())));
    }
    let delta = if t.is_empty() { default_delta } else { uniform_step(&t).map_err(bad)? };
    Ok(SampledPath::new(x, delta)?)
}

fn uniform_step(t: &[f64]) -> Result<f64, String> {
    let delta = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if delta.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err("time column must increase".into());
    }
    for (i, w) in t.windows(2).enumerate() {
        let d = w[1] - w[0];
        if ((d - delta) / delta).abs() > SPACING_TOL {
            return Err(format!(
                "time column is not uniform: step {d} between observations {} and {} differs from {delta}",
                i + 1,
                i + 2
            ));
        }
    }
    Ok(delta)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    std::fs::File::create(path).map(std::io::BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, out: Result<(), std::io::Error>) -> Result<(), CliError> {
    out.map_err(|e| CliError::io(path, e))
}

/// Two columns t, x with t = i * delta.
pub fn write_path(path: &Path, p: &SampledPath, stamp: &Stamp) -> Result<(), CliError> {
    let mut f = create(path)?;
    let res = (|| {
        f.write_all(stamp.header().as_bytes())?;
        writeln!(f, "t,x")?;
        for (i, x) in p.values.iter().enumerate() {
            writeln!(f, "{},{}", i as f64 * p.delta, x)?;
        }
        f.flush()
    })();
    finish(path, res)
}

pub fn write_plot(path: &Path, rows: &[PlotRow], stamp: &Stamp) -> Result<(), CliError> {
    let mut f = create(path)?;
    let res = (|| {
        f.write_all(stamp.header().as_bytes())?;
        writeln!(f, "segment,scale_index,log_scale,log_variance,fitted")?;
        for r in rows {
            writeln!(f, "{},{},{},{},{}", r.segment, r.scale_index, r.log_scale, r.log_variance, r.fitted)?;
        }
        f.flush()
    })();
    finish(path, res)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per replicate (`kind` = replicate) followed by the rows
/// truth, mean, sd and rmse of each change fraction and exponent.
pub fn write_montecarlo(path: &Path, r: &MonteCarloResult, m: usize, stamp: &Stamp) -> Result<(), CliError> {
    let segs = m + 1;
    let mut cols = vec!["kind".to_string(), "replicate".into(), "seed".into()];
    let mut quantities = Vec::new();
    quantities.extend((1..=m).map(|j| format!("tau_{j}")));
    quantities.extend((0..segs).map(|j| format!("ols_{j}")));
    quantities.extend((0..segs).map(|j| format!("fgls_{j}")));
    cols.extend(quantities.iter().cloned());
    cols.extend((0..segs).map(|j| format!("gof_{j}")));
    cols.extend((0..segs).map(|j| format!("gof_p_{j}")));

    let mut f = create(path)?;
    let res = (|| {
        f.write_all(stamp.header().as_bytes())?;
        writeln!(f, "{}", cols.join(","))?;
        for rep in &r.replicates {
            let mut line = vec!["replicate".to_string(), rep.index.to_string(), rep.seed.to_string()];
            line.extend((0..m).map(|j| cell(rep.tau_hat.get(j).copied())));
            line.extend((0..segs).map(|j| cell(rep.exponent_ols.get(j).copied())));
            line.extend((0..segs).map(|j| cell(rep.exponent_fgls.get(j).copied().flatten())));
            line.extend((0..segs).map(|j| cell(rep.gof_statistic.get(j).copied().flatten())));
            line.extend((0..segs).map(|j| cell(rep.gof_p_value.get(j).copied().flatten())));
            writeln!(f, "{}", line.join(","))?;
        }
        for kind in ["truth", "mean", "sd", "rmse"] {
            let mut line = vec![kind.to_string(), String::new(), String::new()];
            for q in &quantities {
                line.push(cell(r.row(q).map(|s| match kind {
                    "truth" => s.truth,
                    "mean" => s.mean,
                    "sd" => s.sd,
                    _ => s.rmse,
                })));
            }
            line.extend(std::iter::repeat_n(String::new(), 2 * segs));
            writeln!(f, "{}", line.join(","))?;
        }
        f.flush()
    })();
    finish(path, res)
}
