//! Rejection frequencies over a grid of hypothesised values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Design;
use crate::direction::{CnRegime, Method, MethodChoice};
use crate::rng::derive_seed;
use crate::testkit::{run_multi_split, TestOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub base_seed: u64,
    pub cn: CnRegime,
    /// `j*` for the screening method; `None` is the `-beta` column.
    pub j_star: Option<usize>,
    pub test: TestOptions,
}

impl McOptions {
    pub fn new(n: usize, reps: usize, alpha: f64, base_seed: u64) -> Self {
        Self {
            n,
            reps,
            alpha,
            base_seed,
            cn: CnRegime::default(),
            j_star: None,
            test: TestOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCurve {
    pub grid: Vec<f64>,
    pub reject_direct: Vec<f64>,
    pub se_direct: Vec<f64>,
    pub reject_screening: Vec<f64>,
    pub se_screening: Vec<f64>,
    pub reps: usize,
    pub n: usize,
}

pub const CSV_HEADER: [&str; 7] = ["value", "reject_direct", "se_direct", "reject_screening", "se_screening", "reps", "n"];

pub fn mc_se(freq: f64, reps: usize) -> f64 {
    (freq * (1.0 - freq) / reps as f64).sqrt()
}

impl RejectionCurve {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for i in 0..self.grid.len() {
            w.write_record([
                self.grid[i].to_string(),
                self.reject_direct[i].to_string(),
                self.se_direct[i].to_string(),
                self.reject_screening[i].to_string(),
                self.se_screening[i].to_string(),
                self.reps.to_string(),
                self.n.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(s.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != CSV_HEADER {
            return Err(Error::Data(format!("expected header {}, got {}", CSV_HEADER.join(","), header.join(","))));
        }
        let mut c = RejectionCurve {
            grid: vec![],
            reject_direct: vec![],
            se_direct: vec![],
            reject_screening: vec![],
            se_screening: vec![],
            reps: 0,
            n: 0,
        };
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!("row {}: `{}` is not a number in column {}", line + 1, &rec[k], CSV_HEADER[k]))
                })
            };
            let count = |k: usize| -> Result<usize> {
                rec[k].trim().parse::<usize>().map_err(|_| {
                    Error::Data(format!("row {}: `{}` is not a count in column {}", line + 1, &rec[k], CSV_HEADER[k]))
                })
            };
            c.grid.push(num(0)?);
            c.reject_direct.push(num(1)?);
            c.se_direct.push(num(2)?);
            c.reject_screening.push(num(3)?);
            c.se_screening.push(num(4)?);
            let (reps, n) = (count(5)?, count(6)?);
            if line > 0 && (reps != c.reps || n != c.n) {
                return Err(Error::Data(format!("row {}: reps and n must be constant", line + 1)));
            }
            c.reps = reps;
            c.n = n;
        }
        if c.grid.is_empty() {
            return Err(Error::Data("rejection curve has no rows".into()));
        }
        Ok(c)
    }
}

/// Runs both methods on the same data set for every `(grid point, rep)`.
/// Data for each pair come from `derive_seed(base_seed, [grid index, rep])`.
pub fn monte_carlo(design: &Design, grid: &[f64], opts: &McOptions) -> Result<RejectionCurve> {
    design.validate()?;
    if opts.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid is empty".into()));
    }
    let direct = MethodChoice { method: Method::Direct, cn: opts.cn };
    let screening = MethodChoice { method: Method::Screening { j_star: opts.j_star }, cn: opts.cn };
    let models = grid.iter().map(|&v| design.model(v)).collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..opts.reps).map(move |r| (g, r))).collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(g, r)| -> Result<(usize, bool, bool)> {
            let seed = derive_seed(opts.base_seed, &[g as u64, r as u64]);
            let ctx = |e: Error| e.context(format!("value {} rep {r}", grid[g]));
            let data = design.generate(opts.n, seed).map_err(ctx)?;
            let a = run_multi_split(&models[g], &data, &direct, opts.alpha, seed, &opts.test).map_err(ctx)?;
            let b = run_multi_split(&models[g], &data, &screening, opts.alpha, seed, &opts.test).map_err(ctx)?;
            Ok((g, a.reject, b.reject))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut hits = vec![(0usize, 0usize); grid.len()];
    for (g, a, b) in outcomes {
        hits[g].0 += usize::from(a);
        hits[g].1 += usize::from(b);
    }
    let reps = opts.reps as f64;
    let freq = |k: usize| k as f64 / reps;
    Ok(RejectionCurve {
        grid: grid.to_vec(),
        reject_direct: hits.iter().map(|h| freq(h.0)).collect(),
        se_direct: hits.iter().map(|h| mc_se(freq(h.0), opts.reps)).collect(),
        reject_screening: hits.iter().map(|h| freq(h.1)).collect(),
        se_screening: hits.iter().map(|h| mc_se(freq(h.1), opts.reps)).collect(),
        reps: opts.reps,
        n: opts.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let c = RejectionCurve {
            grid: vec![-0.1, 0.0, 0.1 + 0.2],
            reject_direct: vec![0.0, 0.04, 1.0],
            se_direct: vec![0.0, mc_se(0.04, 100), 0.0],
            reject_screening: vec![0.01, 0.05, 1.0],
            se_screening: vec![mc_se(0.01, 100), mc_se(0.05, 100), 0.0],
            reps: 100,
            n: 500,
        };
        let s = c.to_csv_string().unwrap();
        assert!(s.starts_with("value,reject_direct,se_direct,reject_screening,se_screening,reps,n\n"));
        assert_eq!(RejectionCurve::from_csv_str(&s).unwrap(), c);
        assert!(RejectionCurve::from_csv_str("a,b\n1,2\n").is_err());
        assert!(RejectionCurve::from_csv_str(&CSV_HEADER.join(",")).is_err());
    }

    #[test]
    fn small_runs() {
        let d = Design::Cox { h: 2 };
        let opts = McOptions::new(40, 1, 0.05, 3);
        let c = monte_carlo(&d, &[-0.5, 0.5], &opts).unwrap();
        assert!(c.reject_direct.iter().chain(&c.reject_screening).all(|&f| f == 0.0 || f == 1.0));
        assert_eq!(c, monte_carlo(&d, &[-0.5, 0.5], &opts).unwrap());

        // inside the identified set; n is large enough for c_n > 0.8
        let opts = McOptions::new(500, 5, 1e-6, 3);
        let c = monte_carlo(&d, &[-1.0, 0.0], &opts).unwrap();
        assert!(c.reject_direct.iter().chain(&c.reject_screening).all(|&f| f == 0.0));

        assert!(monte_carlo(&d, &[0.0], &McOptions::new(40, 0, 0.05, 3)).is_err());
        assert!(monte_carlo(&d, &[], &McOptions::new(40, 1, 0.05, 3)).is_err());
    }
}
