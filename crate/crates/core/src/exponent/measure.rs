//! Tabulated Lévy densities and their text file format.
//!
//! The density is interpolated linearly in log–log coordinates between grid
//! points and continued as a power law beyond both ends of the table:
//! `π(ℓ) ∝ ℓ^{-1-a_low}` below the first grid point and `ℓ^{-1-a_high}`
//! above the last one.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{domain, Error, Result};

/// Default relative tolerance for quadratures against a tabulated density.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// A Lévy density given on a logarithmic grid with power-law end pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMeasureSpec {
    grid: Vec<f64>,
    density: Vec<f64>,
    slopes: Vec<f64>,
    /// Tail mass `∫_{grid[i]}^∞ π` at each grid point.
    tails: Vec<f64>,
    low_exponent: f64,
    high_exponent: f64,
    tolerance: f64,
}

impl LevyMeasureSpec {
    /// Builds a table from grid points and density values.
    ///
    /// The grid must be strictly increasing with a constant ratio between
    /// neighbours (relative slack 1e-3 on the log step), the density strictly
    /// positive, and `a_high > 1` so that `∫_1^∞ ℓ π(dℓ)` is finite.
    pub fn new(
        grid: Vec<f64>,
        density: Vec<f64>,
        low_exponent: f64,
        high_exponent: f64,
        tolerance: f64,
    ) -> Result<Self> {
        if grid.len() < 2 || grid.len() != density.len() {
            return Err(Error::Inadmissible(format!(
                "need at least two grid points with matching densities (got {} and {})",
                grid.len(),
                density.len()
            )));
        }
        if !(tolerance > 0.0 && tolerance < 1e-2) {
            return Err(domain("tolerance", tolerance, "must lie in (0, 1e-2)"));
        }
        if !(high_exponent > 1.0 && high_exponent.is_finite()) {
            return Err(domain(
                "high_exponent",
                high_exponent,
                "must exceed 1 so that the first moment of large jumps is finite",
            ));
        }
        if !(low_exponent < 2.0 && low_exponent.is_finite()) {
            return Err(domain(
                "low_exponent",
                low_exponent,
                "must be below 2 so that the second moment of small jumps is finite",
            ));
        }
        for (&l, &d) in grid.iter().zip(&density) {
            if !(l > 0.0 && l.is_finite()) {
                return Err(domain("grid point", l, "must be positive and finite"));
            }
            if !(d > 0.0 && d.is_finite()) {
                return Err(domain("density", d, "must be positive and finite"));
            }
        }
        let step = (grid[1] / grid[0]).ln();
        if !(step > 0.0) {
            return Err(domain("grid", grid[1], "must be strictly increasing"));
        }
        for w in grid.windows(2) {
            let s = (w[1] / w[0]).ln();
            if !(s > 0.0) || (s - step).abs() > 1e-3 * step {
                return Err(domain("grid", w[1], "must be logarithmically spaced"));
            }
        }
        let slopes: Vec<f64> = grid
            .windows(2)
            .zip(density.windows(2))
            .map(|(g, d)| (d[1] / d[0]).ln() / (g[1] / g[0]).ln())
            .collect();
        let mut spec = LevyMeasureSpec {
            tails: vec![0.0; grid.len()],
            grid,
            density,
            slopes,
            low_exponent,
            high_exponent,
            tolerance,
        };
        let n = spec.grid.len();
        spec.tails[n - 1] = spec.upper_tail(spec.grid[n - 1]);
        for i in (0..n - 1).rev() {
            spec.tails[i] = spec.tails[i + 1] + spec.cell_mass(i, spec.grid[i], spec.grid[i + 1]);
        }
        Ok(spec)
    }

    /// Tabulates `density(ℓ)` at `points` log-spaced values on `[lo, hi]`.
    pub fn from_fn<F: Fn(f64) -> f64>(
        density: F,
        lo: f64,
        hi: f64,
        points: usize,
        low_exponent: f64,
        high_exponent: f64,
    ) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || points < 2 {
            return Err(domain("lo", lo, "need 0 < lo < hi and at least two points"));
        }
        let step = (hi / lo).ln() / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| lo * (step * i as f64).exp()).collect();
        let dens = grid.iter().map(|&l| density(l)).collect();
        Self::new(grid, dens, low_exponent, high_exponent, DEFAULT_TOLERANCE)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    pub fn low_exponent(&self) -> f64 {
        self.low_exponent
    }

    pub fn high_exponent(&self) -> f64 {
        self.high_exponent
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Smallest tabulated jump size.
    pub fn floor(&self) -> f64 {
        self.grid[0]
    }

    /// Interpolated density at `l > 0`.
    pub fn density(&self, l: f64) -> f64 {
        let n = self.grid.len();
        if l <= self.grid[0] {
            return self.density[0] * (l / self.grid[0]).powf(-1.0 - self.low_exponent);
        }
        if l >= self.grid[n - 1] {
            return self.density[n - 1] * (l / self.grid[n - 1]).powf(-1.0 - self.high_exponent);
        }
        let i = self.cell(l);
        self.density[i] * (l / self.grid[i]).powf(self.slopes[i])
    }

    fn cell(&self, l: f64) -> usize {
        (self.grid.partition_point(|&g| g <= l) - 1).min(self.grid.len() - 2)
    }

    /// Local log–log slope and anchor for the piece containing `l`.
    fn piece(&self, i: Option<usize>) -> (f64, f64, f64) {
        match i {
            Some(i) => (self.grid[i], self.density[i], self.slopes[i]),
            None => (self.grid[0], self.density[0], -1.0 - self.low_exponent),
        }
    }

    /// `∫_a^b π` within one power-law piece (`None` = below the grid).
    fn cell_mass(&self, i: usize, a: f64, b: f64) -> f64 {
        self.piece_mass(Some(i), a, b)
    }

    fn piece_mass(&self, i: Option<usize>, a: f64, b: f64) -> f64 {
        let (l0, d0, s) = self.piece(i);
        let q = s + 1.0;
        let ya = (a / l0).ln();
        let yb = (b / l0).ln();
        d0 * l0 * exp_integral(q, ya, yb)
    }

    fn upper_tail(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let h = self.high_exponent;
        self.density[n - 1] * self.grid[n - 1] * (x / self.grid[n - 1]).powf(-h) / h
    }

    /// Tail mass `π((x, ∞))`; infinite as `x → 0` when `a_low ≥ 0`.
    pub fn tail(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x >= self.grid[n - 1] {
            return self.upper_tail(x);
        }
        if x < self.grid[0] {
            return self.tails[0] + self.piece_mass(None, x, self.grid[0]);
        }
        let i = self.cell(x);
        self.tails[i + 1] + self.cell_mass(i, x, self.grid[i + 1])
    }

    /// Inverse of [`tail`](Self::tail): the `x` with `π((x, ∞)) = t`.
    pub fn tail_inverse(&self, t: f64) -> f64 {
        let n = self.grid.len();
        if t <= self.tails[n - 1] {
            let h = self.high_exponent;
            let l = self.grid[n - 1];
            return l * (t * h / (self.density[n - 1] * l)).powf(-1.0 / h);
        }
        let (i, base, top) = if t > self.tails[0] {
            (None, self.tails[0], self.grid[0])
        } else {
            // tails is decreasing: find the cell with tails[i] ≥ t > tails[i+1]
            let k = self.tails.partition_point(|&v| v >= t);
            let i = k.saturating_sub(1).min(n - 2);
            (Some(i), self.tails[i + 1], self.grid[i + 1])
        };
        let (l0, d0, s) = self.piece(i);
        let q = s + 1.0;
        let m = (t - base) / (d0 * l0);
        let yb = (top / l0).ln();
        let ya = if q.abs() < 1e-12 {
            yb - m
        } else {
            let e = (q * yb).exp() - q * m;
            e.ln() / q
        };
        l0 * ya.exp()
    }

    /// Parses the text format documented in the README.
    pub fn parse(text: &str) -> Result<Self> {
        let mut low = None;
        let mut high = None;
        let mut tol = DEFAULT_TOLERANCE;
        let mut grid = Vec::new();
        let mut dens = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    let key = k.trim();
                    let val: f64 = v.trim().parse().map_err(|_| Error::MeasureFormat {
                        line: line_no,
                        msg: format!("cannot parse value for {key}"),
                    })?;
                    match key {
                        "low_exponent" => low = Some(val),
                        "high_exponent" => high = Some(val),
                        "tolerance" => tol = val,
                        _ => {}
                    }
                }
                continue;
            }
            let mut cols = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.parse().ok()).ok_or(Error::MeasureFormat {
                    line: line_no,
                    msg: "expected two numeric columns".into(),
                })
            };
            grid.push(parse(cols.next())?);
            dens.push(parse(cols.next())?);
            if cols.next().is_some() {
                return Err(Error::MeasureFormat {
                    line: line_no,
                    msg: "expected two numeric columns".into(),
                });
            }
        }
        let missing = |what: &str| Error::MeasureFormat {
            line: 0,
            msg: format!("missing header line '# {what} = ...'"),
        };
        let low = low.ok_or_else(|| missing("low_exponent"))?;
        let high = high.ok_or_else(|| missing("high_exponent"))?;
        Self::new(grid, dens, low, high, tol)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Renders the table in the format accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut s = String::from("# crtfrag levy-measure v1\n");
        let _ = writeln!(s, "# low_exponent = {}", self.low_exponent);
        let _ = writeln!(s, "# high_exponent = {}", self.high_exponent);
        let _ = writeln!(s, "# tolerance = {:e}", self.tolerance);
        for (l, d) in self.grid.iter().zip(&self.density) {
            let _ = writeln!(s, "{l:.17e} {d:.17e}");
        }
        s
    }
}

/// `∫_{ya}^{yb} e^{q y} dy`, accurate for `q` near zero.
fn exp_integral(q: f64, ya: f64, yb: f64) -> f64 {
    let w = yb - ya;
    if (q * w).abs() < 1e-12 {
        (q * ya).exp() * w
    } else {
        (q * ya).exp() * (q * w).exp_m1() / q
    }
}
