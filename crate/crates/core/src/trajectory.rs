//! Time series of node and link counts on a uniform grid, plus the CSV
//! format shared by the simulator and the solvers.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Tracked series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    S,
    I,
    R,
    SI,
    SS,
}

impl Series {
    pub const ALL: [Series; 5] = [Series::S, Series::I, Series::R, Series::SI, Series::SS];

    pub fn name(self) -> &'static str {
        match self {
            Series::S => "S",
            Series::I => "I",
            Series::R => "R",
            Series::SI => "SI",
            Series::SS => "SS",
        }
    }
}

/// `[S], [I], [R], [SI], [SS]` sampled at `t_k = k * dt`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub si: Vec<f64>,
    pub ss: Vec<f64>,
}

impl Trajectory {
    pub fn with_capacity(dt: f64, points: usize) -> Self {
        Self {
            dt,
            t: Vec::with_capacity(points),
            s: Vec::with_capacity(points),
            i: Vec::with_capacity(points),
            r: Vec::with_capacity(points),
            si: Vec::with_capacity(points),
            ss: Vec::with_capacity(points),
        }
    }

    pub fn push(&mut self, t: f64, s: f64, i: f64, r: f64, si: f64, ss: f64) {
        self.t.push(t);
        self.s.push(s);
        self.i.push(i);
        self.r.push(r);
        self.si.push(si);
        self.ss.push(ss);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn series(&self, which: Series) -> &[f64] {
        match which {
            Series::S => &self.s,
            Series::I => &self.i,
            Series::R => &self.r,
            Series::SI => &self.si,
            Series::SS => &self.ss,
        }
    }

    pub fn series_mut(&mut self, which: Series) -> &mut Vec<f64> {
        match which {
            Series::S => &mut self.s,
            Series::I => &mut self.i,
            Series::R => &mut self.r,
            Series::SI => &mut self.si,
            Series::SS => &mut self.ss,
        }
    }

    /// Linear interpolation of a series at time `t`, clamped to the grid.
    pub fn value_at(&self, which: Series, t: f64) -> f64 {
        let ys = self.series(which);
        if t <= self.t[0] {
            return ys[0];
        }
        let last = self.len() - 1;
        if t >= self.t[last] {
            return ys[last];
        }
        let pos = (t - self.t[0]) / self.dt;
        let k = (pos.floor() as usize).min(last - 1);
        let w = pos - k as f64;
        ys[k] * (1.0 - w) + ys[k + 1] * w
    }

    /// Keeps every `stride`-th point.
    pub fn thinned(&self, stride: usize) -> Self {
        assert!(stride >= 1);
        let pick = |v: &Vec<f64>| v.iter().step_by(stride).copied().collect::<Vec<_>>();
        Self {
            dt: self.dt * stride as f64,
            t: pick(&self.t),
            s: pick(&self.s),
            i: pick(&self.i),
            r: pick(&self.r),
            si: pick(&self.si),
            ss: pick(&self.ss),
        }
    }

    /// Resamples onto `t_k = k * dt` up to the last time of `self`.
    pub fn resampled(&self, dt: f64) -> Self {
        let end = *self.t.last().unwrap_or(&0.0);
        let points = (end / dt + 1e-9).floor() as usize + 1;
        let mut out = Self::with_capacity(dt, points);
        for k in 0..points {
            let t = k as f64 * dt;
            out.push(
                t,
                self.value_at(Series::S, t),
                self.value_at(Series::I, t),
                self.value_at(Series::R, t),
                self.value_at(Series::SI, t),
                self.value_at(Series::SS, t),
            );
        }
        out
    }

    /// Maximum prevalence and the first time it is attained.
    pub fn peak_prevalence(&self) -> (f64, f64) {
        self.i
            .iter()
            .zip(&self.t)
            .fold((f64::NEG_INFINITY, 0.0), |(best, bt), (&v, &t)| {
                if v > best {
                    (v, t)
                } else {
                    (best, bt)
                }
            })
    }

    pub fn last(&self, which: Series) -> f64 {
        *self.series(which).last().expect("non-empty trajectory")
    }

    /// Smallest value over all series.
    pub fn min_value(&self) -> f64 {
        Series::ALL
            .iter()
            .flat_map(|&s| self.series(s).iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Pointwise mean and sample standard deviation over trajectories sharing
    /// one grid. A single member yields zero deviation.
    pub fn mean_and_std(members: &[Trajectory]) -> (Trajectory, Trajectory) {
        assert!(!members.is_empty(), "empty ensemble");
        let first = &members[0];
        let len = first.len();
        let count = members.len() as f64;
        let mut mean = first.clone();
        let mut std = first.clone();
        for which in Series::ALL {
            let m = mean.series_mut(which);
            let sd = std.series_mut(which);
            for k in 0..len {
                let avg = members.iter().map(|tr| tr.series(which)[k]).sum::<f64>() / count;
                let var = if members.len() > 1 {
                    members
                        .iter()
                        .map(|tr| (tr.series(which)[k] - avg).powi(2))
                        .sum::<f64>()
                        / (count - 1.0)
                } else {
                    0.0
                };
                m[k] = avg;
                sd[k] = var.sqrt();
            }
        }
        (mean, std)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, meta: &Meta) -> io::Result<()> {
        writeln!(w, "{}", meta.line())?;
        writeln!(w, "t,S,I,R,SI,SS")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.t[k], self.s[k], self.i[k], self.r[k], self.si[k], self.ss[k]
            )?;
        }
        Ok(())
    }

    /// Writes the mean columns followed by `*_std` columns.
    pub fn write_ensemble_csv<W: Write>(
        mean: &Trajectory,
        std: &Trajectory,
        mut w: W,
        meta: &Meta,
    ) -> io::Result<()> {
        writeln!(w, "{}", meta.line())?;
        writeln!(w, "t,S,I,R,SI,SS,S_std,I_std,R_std,SI_std,SS_std")?;
        for k in 0..mean.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                mean.t[k],
                mean.s[k],
                mean.i[k],
                mean.r[k],
                mean.si[k],
                mean.ss[k],
                std.s[k],
                std.i[k],
                std.r[k],
                std.si[k],
                std.ss[k]
            )?;
        }
        Ok(())
    }

    /// Reads the `t,S,I,R,SI,SS` columns of a CSV written by this module;
    /// extra columns are ignored.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<(Trajectory, Meta), CsvError> {
        let mut meta = Meta::default();
        let mut header: Option<Vec<String>> = None;
        let mut tr = Trajectory::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix("# meta:") {
                meta = Meta::parse_line(rest);
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let Some(cols) = &header else {
                header = Some(line.split(',').map(|c| c.trim().to_string()).collect());
                continue;
            };
            let values: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CsvError::Parse {
                    line: lineno,
                    reason: e.to_string(),
                })?;
            if values.len() != cols.len() {
                return Err(CsvError::Parse {
                    line: lineno,
                    reason: format!("expected {} fields, got {}", cols.len(), values.len()),
                });
            }
            let get = |name: &str| -> Result<f64, CsvError> {
                cols.iter()
                    .position(|c| c == name)
                    .map(|p| values[p])
                    .ok_or_else(|| CsvError::Parse {
                        line: lineno,
                        reason: format!("missing column {name}"),
                    })
            };
            tr.push(get("t")?, get("S")?, get("I")?, get("R")?, get("SI")?, get("SS")?);
        }
        if tr.len() >= 2 {
            tr.dt = tr.t[1] - tr.t[0];
        }
        Ok((tr, meta))
    }
}

/// Ordered `key=value` pairs echoed as a `# meta:` comment line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Meta {
    pub entries: Vec<(String, String)>,
}

impl Meta {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Values may contain commas and colons but not `;`, which separates
    /// entries.
    pub fn line(&self) -> String {
        let mut s = String::from("# meta:");
        for (k, v) in &self.entries {
            let _ = write!(s, " {k}={};", v.replace(';', ","));
        }
        s
    }

    /// Parses the text after the `# meta:` marker.
    pub fn parse_line(rest: &str) -> Self {
        let entries = rest
            .split(';')
            .filter_map(|kv| {
                let kv = kv.trim();
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            })
            .collect();
        Self { entries }
    }
}
