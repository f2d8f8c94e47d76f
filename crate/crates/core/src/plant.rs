//! Discrete-time LTI plant simulation, excitation data collection and Hankel
//! data matrices.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{rank, require_square};

/// `x(t+1) = A x(t) + B u(t) + w(t)`, `y(t) = C x(t) + v(t)` with Gaussian
/// `w ∼ N(0, Σ_w)` and `v ∼ N(0, Σ_v)`.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    sigma_w: DMatrix<f64>,
    sigma_v: DMatrix<f64>,
    w_factor: DMatrix<f64>,
    v_factor: DMatrix<f64>,
}

/// Symmetric square root of a PSD matrix (tolerates singular covariances).
fn psd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale.max(1.0)) {
        return Err(Error::Precondition("covariance is not PSD".into()));
    }
    let mut out = DMatrix::zeros(s.nrows(), s.ncols());
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            let v = eig.eigenvectors.column(k);
            out.ger(l.sqrt(), &v, &v, 1.0);
        }
    }
    Ok(out)
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        sigma_w: DMatrix<f64>,
        sigma_v: DMatrix<f64>,
    ) -> Result<Self> {
        require_square("A", &a)?;
        let n = a.nrows();
        check_len("B rows", n, b.nrows())?;
        check_len("C cols", n, c.ncols())?;
        check_len("Sigma_w", n, sigma_w.nrows())?;
        require_square("Sigma_w", &sigma_w)?;
        check_len("Sigma_v", c.nrows(), sigma_v.nrows())?;
        require_square("Sigma_v", &sigma_v)?;
        for s in [&sigma_w, &sigma_v] {
            if crate::linalg::max_abs(&(s - s.transpose())) > 1e-12 {
                return Err(Error::Precondition("covariance is not symmetric".into()));
            }
        }
        let w_factor = psd_sqrt(&sigma_w)?;
        let v_factor = psd_sqrt(&sigma_v)?;
        Ok(Self {
            a,
            b,
            c,
            sigma_w,
            sigma_v,
            w_factor,
            v_factor,
        })
    }

    /// Noise-free system.
    pub fn deterministic(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let (n, p) = (a.nrows(), c.nrows());
        Self::new(a, b, c, DMatrix::zeros(n, n), DMatrix::zeros(p, p))
    }

    /// Linearized quadruple-tank benchmark plant.
    pub fn quadruple_tank() -> Self {
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            0.921, 0.0,   0.041, 0.0,
            0.0,   0.918, 0.0,   0.033,
            0.0,   0.0,   0.924, 0.0,
            0.0,   0.0,   0.0,   0.937,
        ]);
        #[rustfmt::skip]
        let b = DMatrix::from_row_slice(4, 2, &[
            0.017, 0.001,
            0.001, 0.023,
            0.0,   0.061,
            0.072, 0.0,
        ]);
        #[rustfmt::skip]
        let c = DMatrix::from_row_slice(2, 4, &[
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        ]);
        let sigma_w = DMatrix::identity(4, 4) * 0.01;
        let sigma_v = DMatrix::identity(2, 2) * 0.1;
        Self::new(a, b, c, sigma_w, sigma_v).expect("preset is well formed")
    }

    pub fn without_noise(&self) -> Self {
        Self::deterministic(self.a.clone(), self.b.clone(), self.c.clone())
            .expect("dimensions already validated")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn sigma_w(&self) -> &DMatrix<f64> {
        &self.sigma_w
    }
    pub fn sigma_v(&self) -> &DMatrix<f64> {
        &self.sigma_v
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n, n * m);
        let mut blk = self.b.clone();
        for k in 0..n {
            out.view_mut((0, k * m), (n, m)).copy_from(&blk);
            blk = &self.a * blk;
        }
        out
    }

    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.p());
        let mut out = DMatrix::zeros(n * p, n);
        let mut blk = self.c.clone();
        for k in 0..n {
            out.view_mut((k * p, 0), (p, n)).copy_from(&blk);
            blk *= &self.a;
        }
        out
    }

    pub fn is_controllable(&self) -> bool {
        rank(&self.controllability_matrix(), 1e-10) == self.n()
    }

    pub fn is_observable(&self) -> bool {
        rank(&self.observability_matrix(), 1e-10) == self.n()
    }

    /// Advance one step. Returns `(x_next, y)` where `y` reads the pre-update
    /// state. Noise is always drawn (process first, then measurement) so the
    /// random stream does not depend on the covariances.
    pub fn step<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        rng: &mut R,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        check_len("step state", self.n(), x.len())?;
        check_len("step input", self.m(), u.len())?;
        let w = DVector::from_fn(self.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = DVector::from_fn(self.p(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let x_next = &self.a * x + &self.b * u + &self.w_factor * w;
        let y = &self.c * x + &self.v_factor * v;
        Ok((x_next, y))
    }

    /// Steady state `(x, u)` whose noise-free output equals `r`, least-norm
    /// in `u` when several exist.
    pub fn steady_state(&self, r: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_len("steady-state reference", self.p(), r.len())?;
        let n = self.n();
        let i_minus_a = DMatrix::identity(n, n) - &self.a;
        let inv = i_minus_a
            .try_inverse()
            .ok_or_else(|| Error::Precondition("A has an eigenvalue at 1".into()))?;
        let dc_gain = &self.c * &inv * &self.b;
        let u = crate::linalg::pseudo_inverse(&dc_gain, 0.0) * r;
        let x = inv * &self.b * &u;
        Ok((x, u))
    }
}

/// Per-coordinate bounds `lower ≤ v ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub fn validate(&self) -> Result<()> {
        check_len("box bounds", self.lower.len(), self.upper.len())?;
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u || l.is_nan() || u.is_nan()) {
            return Err(Error::Precondition("empty box".into()));
        }
        Ok(())
    }

    /// Uniform sample; requires finite bounds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..hi)
            }
        })
    }
}

/// Recorded input/output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct IoLog {
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl IoLog {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn m(&self) -> usize {
        self.inputs.first().map_or(0, |u| u.len())
    }

    pub fn p(&self) -> usize {
        self.outputs.first().map_or(0, |y| y.len())
    }

    /// CSV with header `t,u1..um,y1..yp`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.m()).map(|i| format!("u{i}")));
        header.extend((1..=self.p()).map(|i| format!("y{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, (u, y)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            let mut row = t.to_string();
            for v in u.iter().chain(y.iter()) {
                row.push(',');
                row.push_str(&v.to_string());
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("io log", "empty file"))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(Error::format("io log", "header must start with `t`"));
        }
        let m = cols.iter().filter(|c| c.starts_with('u')).count();
        let p = cols.iter().filter(|c| c.starts_with('y')).count();
        if m + p + 1 != cols.len() {
            return Err(Error::format("io log", format!("unexpected header `{header}`")));
        }
        let mut log = IoLog {
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .trim()
                .split(',')
                .skip(1)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format("io log", format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != m + p {
                return Err(Error::format(
                    "io log",
                    format!("line {} has {} values, expected {}", lineno + 2, vals.len(), m + p),
                ));
            }
            log.inputs.push(DVector::from_column_slice(&vals[..m]));
            log.outputs.push(DVector::from_column_slice(&vals[m..]));
        }
        Ok(log)
    }
}

/// Simulate `t_data` steps from `x(0) = 0` under i.i.d. uniform inputs.
pub fn collect_data<R: Rng + ?Sized>(
    sys: &LtiSystem,
    t_data: usize,
    input_box: &BoxBounds,
    rng: &mut R,
) -> Result<IoLog> {
    if t_data == 0 {
        return Err(Error::Precondition("T_data must be at least 1".into()));
    }
    input_box.validate()?;
    check_len("input box", sys.m(), input_box.dim())?;
    let mut x = DVector::zeros(sys.n());
    let mut log = IoLog {
        inputs: Vec::with_capacity(t_data),
        outputs: Vec::with_capacity(t_data),
    };
    for _ in 0..t_data {
        let u = input_box.sample(rng);
        let (x_next, y) = sys.step(&x, &u, rng)?;
        log.inputs.push(u);
        log.outputs.push(y);
        x = x_next;
    }
    Ok(log)
}

/// Block layout of a length-`L = T_ini + N` trajectory segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub m: usize,
    pub p: usize,
    pub t_ini: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn new(m: usize, p: usize, t_ini: usize, horizon: usize) -> Self {
        Self {
            m,
            p,
            t_ini,
            horizon,
        }
    }

    pub fn len_l(&self) -> usize {
        self.t_ini + self.horizon
    }

    /// Length `(m + p) L` of a stacked segment.
    pub fn dim(&self) -> usize {
        (self.m + self.p) * self.len_l()
    }

    // Row offsets of the four blocks (u_ini, u_future, y_ini, y_future).
    pub fn u_ini(&self) -> std::ops::Range<usize> {
        0..self.m * self.t_ini
    }
    pub fn u_future(&self) -> std::ops::Range<usize> {
        let s = self.m * self.t_ini;
        s..s + self.m * self.horizon
    }
    pub fn y_ini(&self) -> std::ops::Range<usize> {
        let s = self.m * self.len_l();
        s..s + self.p * self.t_ini
    }
    pub fn y_future(&self) -> std::ops::Range<usize> {
        let s = self.m * self.len_l() + self.p * self.t_ini;
        s..s + self.p * self.horizon
    }
}

/// Hankel data matrix `H = [U_p; U_f; Y_p; Y_f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub layout: Layout,
    /// Stacked matrix; the four blocks are row ranges given by `layout`.
    pub h: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(layout: Layout, h: DMatrix<f64>) -> Result<Self> {
        check_len("data matrix rows", layout.dim(), h.nrows())?;
        Ok(Self { layout, h })
    }

    pub fn cols(&self) -> usize {
        self.h.ncols()
    }

    pub fn u_p(&self) -> DMatrix<f64> {
        self.block(self.layout.u_ini())
    }
    pub fn u_f(&self) -> DMatrix<f64> {
        self.block(self.layout.u_future())
    }
    pub fn y_p(&self) -> DMatrix<f64> {
        self.block(self.layout.y_ini())
    }
    pub fn y_f(&self) -> DMatrix<f64> {
        self.block(self.layout.y_future())
    }

    fn block(&self, rows: std::ops::Range<usize>) -> DMatrix<f64> {
        self.h.rows(rows.start, rows.len()).into_owned()
    }

    /// Keep the first `cols` columns.
    pub fn truncate(&self, cols: usize) -> Result<Self> {
        if cols == 0 || cols > self.cols() {
            return Err(Error::Precondition(format!(
                "cannot truncate {} columns to {cols}",
                self.cols()
            )));
        }
        Ok(Self {
            layout: self.layout,
            h: self.h.columns(0, cols).into_owned(),
        })
    }

    /// `[U_p; U_f]` has full row rank at relative tolerance 1e-8.
    pub fn inputs_full_row_rank(&self) -> bool {
        let mut rows = self.u_p();
        rows = rows.resize_vertically(self.layout.m * self.layout.len_l(), 0.0);
        rows.rows_mut(self.layout.m * self.layout.t_ini, self.layout.m * self.layout.horizon)
            .copy_from(&self.u_f());
        rank(&rows, 1e-8) == rows.nrows()
    }

    /// Binary container: see `crate::container`.
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let header = serde_json::json!({
            "layout": self.layout,
            "rows": self.h.nrows(),
            "cols": self.h.ncols(),
            "blocks": ["U_p", "U_f", "Y_p", "Y_f"],
        });
        crate::container::write(w, crate::container::DATA_MAGIC, &header, &[self.h.as_slice()])
    }

    pub fn load<R: std::io::Read>(r: R) -> Result<Self> {
        let (header, arrays) = crate::container::read(r, crate::container::DATA_MAGIC)?;
        let layout: Layout = serde_json::from_value(header["layout"].clone())
            .map_err(|e| Error::format("data matrix header", e.to_string()))?;
        let rows = header["rows"].as_u64().unwrap_or(0) as usize;
        let cols = header["cols"].as_u64().unwrap_or(0) as usize;
        let data = arrays
            .into_iter()
            .next()
            .ok_or_else(|| Error::format("data matrix", "missing payload"))?;
        check_len("data matrix payload", rows * cols, data.len())?;
        Self::new(layout, DMatrix::from_vec(rows, cols, data))
    }
}

/// Build the Hankel data matrix from one contiguous log.
pub fn hankel(log: &IoLog, t_ini: usize, horizon: usize) -> Result<DataMatrix> {
    let l = t_ini + horizon;
    let t_data = log.len();
    if l == 0 || t_data < l {
        return Err(Error::Precondition(format!(
            "need at least T_ini + N = {l} samples, have {t_data}"
        )));
    }
    let (m, p) = (log.m(), log.p());
    let layout = Layout::new(m, p, t_ini, horizon);
    let cols = t_data - l + 1;
    let mut h = DMatrix::zeros(layout.dim(), cols);
    let y_off = m * l;
    for j in 0..cols {
        let mut col = h.column_mut(j);
        for k in 0..l {
            let t = j + k;
            col.rows_mut(k * m, m).copy_from(&log.inputs[t]);
            col.rows_mut(y_off + k * p, p).copy_from(&log.outputs[t]);
        }
    }
    DataMatrix::new(layout, h)
}
