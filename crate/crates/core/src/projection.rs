//! Depth-aware projection from Euclidean embeddings into the shared Poincaré
//! ball, and the bidirectional margin training that shapes it.
//!
//! The projection chains four stages: hierarchy feature extraction
//! `u = tanh(W_φ z + b_φ)`, a type-specific depth head
//! `d_v = σ(w_ψ·u + b_ψ)`, gated fusion of `z` and `u`, and radial alignment
//! `||ẑ|| = α + β·d_v` followed by the exponential map at the origin.
//! Gradients are derived by hand (chain rule through the exp map and the
//! geodesic distance) so the finite-difference check in the tests is a real
//! cross-validation, not a framework identity.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Fact, Passage};
use crate::embed::EmbeddingCache;
use crate::error::{EngineError, NodeKind, Result};
use crate::geometry::{exp_map_origin_raw, Curvature, HyperbolicPoint, BALL_EPS};

/// Guard added to `||z*||` before division; keeps the radial alignment total
/// on the measure-zero all-zero input.
const NORM_GUARD: f64 = 1e-12;

/// Dense row-major matrix, just large enough for the projection layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    /// `y = A·x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }

    /// `x = Aᵀ·y`.
    pub fn t_matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut x = vec![0.0; self.cols];
        for i in 0..self.rows {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (xj, a) in x.iter_mut().zip(row) {
                *xj += a * yi;
            }
        }
        x
    }

    /// `A += scale · y·xᵀ`.
    pub fn add_outer(&mut self, y: &[f64], x: &[f64], scale: f64) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for i in 0..self.rows {
            let yi = y[i] * scale;
            if yi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (a, xj) in row.iter_mut().zip(x) {
                *a += yi * xj;
            }
        }
    }

    fn axpy(&mut self, other: &Matrix, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Linear + sigmoid depth predictor for one node kind.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHead {
    pub w: Vec<f64>,
    pub b: f64,
}

/// All trainable state of the projection, plus the fixed geometry knobs
/// (`α`, `β`, curvature) that shape its output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    dim: usize,
    pub phi_w: Matrix,
    pub phi_b: Vec<f64>,
    pub psi_pass: DepthHead,
    pub psi_fact: DepthHead,
    pub psi_ent: DepthHead,
    pub rho_w: Matrix,
    pub rho_b: Vec<f64>,
    pub gate_w: Matrix,
    norm_offset: f64,
    norm_scale: f64,
    curvature: Curvature,
}

impl ProjectionParams {
    /// Seeded initialization: weights uniform in ±0.05, biases zero.
    pub fn init(
        dim: usize,
        norm_offset: f64,
        norm_scale: f64,
        curvature: Curvature,
        seed: u64,
    ) -> Result<Self> {
        check_radial(norm_offset, norm_scale)?;
        if dim == 0 {
            return Err(EngineError::Config("projection dimension must be > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| rng.random_range(-0.05..0.05))
                .collect();
            Matrix::from_data(rows, cols, data)
        };
        let phi_w = mat(dim, dim);
        let rho_w = mat(dim, 2 * dim);
        let gate_w = mat(dim, dim);
        let mut head = |_: ()| DepthHead {
            w: (0..dim).map(|_| rng.random_range(-0.05..0.05)).collect(),
            b: 0.0,
        };
        let psi_pass = head(());
        let psi_fact = head(());
        let psi_ent = head(());
        Ok(ProjectionParams {
            dim,
            phi_w,
            phi_b: vec![0.0; dim],
            psi_pass,
            psi_fact,
            psi_ent,
            rho_w,
            rho_b: vec![0.0; dim],
            gate_w,
            norm_offset,
            norm_scale,
            curvature,
        })
    }

    /// Reassembles parameters from persisted tensors.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        dim: usize,
        phi_w: Matrix,
        phi_b: Vec<f64>,
        psi_pass: DepthHead,
        psi_fact: DepthHead,
        psi_ent: DepthHead,
        rho_w: Matrix,
        rho_b: Vec<f64>,
        gate_w: Matrix,
        norm_offset: f64,
        norm_scale: f64,
        curvature: Curvature,
    ) -> Result<Self> {
        check_radial(norm_offset, norm_scale)?;
        Ok(ProjectionParams {
            dim,
            phi_w,
            phi_b,
            psi_pass,
            psi_fact,
            psi_ent,
            rho_w,
            rho_b,
            gate_w,
            norm_offset,
            norm_scale,
            curvature,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_offset(&self) -> f64 {
        self.norm_offset
    }

    pub fn norm_scale(&self) -> f64 {
        self.norm_scale
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn head(&self, kind: NodeKind) -> &DepthHead {
        match kind {
            NodeKind::Passage => &self.psi_pass,
            NodeKind::Fact => &self.psi_fact,
            NodeKind::Entity => &self.psi_ent,
        }
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(EngineError::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(())
    }

    /// `u = tanh(W_φ z + b_φ)`; every entry lies in (-1, 1).
    pub fn hierarchy_features(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        let mut u = self.phi_w.matvec(z);
        for (x, b) in u.iter_mut().zip(&self.phi_b) {
            *x = (*x + b).tanh();
        }
        Ok(u)
    }

    /// `d_v = σ(w_ψ·u + b_ψ)` using the head for `kind`.
    pub fn predict_depth(&self, u: &[f64], kind: NodeKind) -> Result<f64> {
        self.check_dim(u)?;
        let head = self.head(kind);
        let s: f64 = head.w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + head.b;
        Ok(sigmoid(s))
    }

    /// Gated fusion `z* = m ⊙ z + (1-m) ⊙ z̃` with `z̃ = tanh(W_ρ[z‖u] + b_ρ)`
    /// and `m = σ(W_g z̃)`.
    pub fn gated_fuse(&self, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        self.check_dim(u)?;
        let (z_star, _, _) = self.fuse_detail(z, u);
        Ok(z_star)
    }

    fn fuse_detail(&self, z: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut zu = Vec::with_capacity(2 * self.dim);
        zu.extend_from_slice(z);
        zu.extend_from_slice(u);
        let mut z_tilde = self.rho_w.matvec(&zu);
        for (x, b) in z_tilde.iter_mut().zip(&self.rho_b) {
            *x = (*x + b).tanh();
        }
        let m: Vec<f64> = self
            .gate_w
            .matvec(&z_tilde)
            .into_iter()
            .map(sigmoid)
            .collect();
        let z_star: Vec<f64> = (0..self.dim)
            .map(|i| m[i] * z[i] + (1.0 - m[i]) * z_tilde[i])
            .collect();
        (z_star, z_tilde, m)
    }

    /// Rescales `z*` so that `||ẑ|| = α + β·d_v`, preserving direction.
    pub fn radial_align(&self, z_star: &[f64], depth: f64) -> Result<Vec<f64>> {
        self.check_dim(z_star)?;
        Ok(radial_align_raw(
            z_star,
            depth,
            self.norm_offset,
            self.norm_scale,
        ))
    }

    /// The full projection: features → depth → fusion → radial alignment →
    /// exponential map, then the boundary clamp.
    pub fn project_node(&self, z: &[f64], kind: NodeKind) -> Result<HyperbolicPoint> {
        let trace = self.forward(z, kind)?;
        Ok(clamp_into_ball(
            trace.point,
            self.curvature,
        ))
    }

    pub(crate) fn forward(&self, z: &[f64], kind: NodeKind) -> Result<NodeTrace> {
        self.check_dim(z)?;
        let u = self.hierarchy_features(z)?;
        let depth = self.predict_depth(&u, kind)?;
        let (z_star, z_tilde, m) = self.fuse_detail(z, &u);
        let aligned = radial_align_raw(&z_star, depth, self.norm_offset, self.norm_scale);
        let point = exp_map_origin_raw(&aligned, self.curvature.get());
        Ok(NodeTrace {
            kind,
            z: z.to_vec(),
            u,
            depth,
            z_tilde,
            m,
            z_star,
            aligned,
            point,
        })
    }
}

fn check_radial(alpha: f64, beta: f64) -> Result<()> {
    let ok = alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0 && alpha + beta <= 1.0;
    if !ok {
        return Err(EngineError::InvalidParameter(format!(
            "radial constants must satisfy 0 < alpha,beta < 1 and alpha+beta <= 1, got alpha={alpha}, beta={beta}"
        )));
    }
    Ok(())
}

fn radial_align_raw(z_star: &[f64], depth: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let norm = crate::geometry::dot(z_star, z_star).sqrt();
    let scale = (alpha + beta * depth) / (norm + NORM_GUARD);
    z_star.iter().map(|x| x * scale).collect()
}

fn clamp_into_ball(coords: Vec<f64>, curvature: Curvature) -> HyperbolicPoint {
    crate::geometry::clamp_into_ball(coords, curvature, BALL_EPS)
}

/// Every intermediate of one node's forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub(crate) struct NodeTrace {
    kind: NodeKind,
    z: Vec<f64>,
    u: Vec<f64>,
    depth: f64,
    z_tilde: Vec<f64>,
    m: Vec<f64>,
    z_star: Vec<f64>,
    aligned: Vec<f64>,
    pub(crate) point: Vec<f64>,
}

/// Gradient accumulator with the same shape as the trainable parameters.
#[derive(Debug, Clone)]
pub struct ProjectionGrads {
    phi_w: Matrix,
    phi_b: Vec<f64>,
    psi: [(Vec<f64>, f64); 3],
    rho_w: Matrix,
    rho_b: Vec<f64>,
    gate_w: Matrix,
}

impl ProjectionGrads {
    fn zeros(dim: usize) -> Self {
        ProjectionGrads {
            phi_w: Matrix::zeros(dim, dim),
            phi_b: vec![0.0; dim],
            psi: [
                (vec![0.0; dim], 0.0),
                (vec![0.0; dim], 0.0),
                (vec![0.0; dim], 0.0),
            ],
            rho_w: Matrix::zeros(dim, 2 * dim),
            rho_b: vec![0.0; dim],
            gate_w: Matrix::zeros(dim, dim),
        }
    }
}

fn head_index(kind: NodeKind) -> usize {
    match kind {
        NodeKind::Passage => 0,
        NodeKind::Fact => 1,
        NodeKind::Entity => 2,
    }
}

/// Geodesic distance together with its gradients w.r.t. both points.
/// At coincident points the distance is 0 and the (sub)gradient is taken as 0.
pub(crate) fn geodesic_distance_grad(
    x: &[f64],
    y: &[f64],
    c: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = x.len();
    let diff_sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let p = 1.0 - c * crate::geometry::dot(x, x);
    let q = 1.0 - c * crate::geometry::dot(y, y);
    let z = 1.0 + 2.0 * c * diff_sq / (p * q);
    if z <= 1.0 {
        return (0.0, vec![0.0; d], vec![0.0; d]);
    }
    let dist = (z + (z * z - 1.0).sqrt()).ln() / c.sqrt();
    let dd_dz = 1.0 / (c.sqrt() * (z * z - 1.0).sqrt());
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let k1 = 4.0 * c / (p * q);
    let kx = 4.0 * c * c * diff_sq / (p * p * q);
    let ky = 4.0 * c * c * diff_sq / (p * q * q);
    for i in 0..d {
        gx[i] = dd_dz * (k1 * (x[i] - y[i]) + kx * x[i]);
        gy[i] = dd_dz * (k1 * (y[i] - x[i]) + ky * y[i]);
    }
    (dist, gx, gy)
}

impl ProjectionParams {
    /// Backpropagates a gradient at the hyperbolic point through one node's
    /// forward trace, accumulating into `grads`.
    pub(crate) fn backward(&self, trace: &NodeTrace, g_point: &[f64], grads: &mut ProjectionGrads) {
        let d = self.dim;
        let c = self.curvature.get();
        let sc = c.sqrt();

        // Exponential map: x = h(r)·ẑ, h(r) = tanh(√c r)/(√c r), r = ||ẑ||.
        let r = crate::geometry::dot(&trace.aligned, &trace.aligned).sqrt();
        let g_aligned: Vec<f64> = if r < 1e-15 {
            g_point.to_vec()
        } else {
            let a = sc * r;
            let t = a.tanh();
            let h = t / a;
            let sech_sq = 1.0 - t * t;
            let dh_dr = sech_sq * sc / a - t * sc / (a * a);
            let dot_zg = crate::geometry::dot(&trace.aligned, g_point);
            (0..d)
                .map(|i| h * g_point[i] + (dh_dr / r) * trace.aligned[i] * dot_zg)
                .collect()
        };

        // Radial alignment: ẑ = ρ(d_v)/n · z*, n = ||z*|| + guard.
        let star_norm = crate::geometry::dot(&trace.z_star, &trace.z_star).sqrt();
        let n = star_norm + NORM_GUARD;
        let radius = self.norm_offset + self.norm_scale * trace.depth;
        let dot_star_g = crate::geometry::dot(&trace.z_star, &g_aligned);
        let mut g_star = vec![0.0; d];
        if star_norm > 0.0 {
            for i in 0..d {
                g_star[i] = radius / n * g_aligned[i]
                    - radius / (n * n) * (trace.z_star[i] / star_norm) * dot_star_g;
            }
        }
        let g_depth = self.norm_scale * dot_star_g / n;

        // Depth head: d_v = σ(s), s = w·u + b.
        let g_s = g_depth * trace.depth * (1.0 - trace.depth);
        let hi = head_index(trace.kind);
        let head = self.head(trace.kind);
        for i in 0..d {
            grads.psi[hi].0[i] += g_s * trace.u[i];
        }
        grads.psi[hi].1 += g_s;
        let mut g_u: Vec<f64> = head.w.iter().map(|w| g_s * w).collect();

        // Gate + fusion: z* = m⊙z + (1-m)⊙z̃, m = σ(W_g z̃).
        let g_m: Vec<f64> = (0..d)
            .map(|i| g_star[i] * (trace.z[i] - trace.z_tilde[i]))
            .collect();
        let g_gate_pre: Vec<f64> = (0..d)
            .map(|i| g_m[i] * trace.m[i] * (1.0 - trace.m[i]))
            .collect();
        grads.gate_w.add_outer(&g_gate_pre, &trace.z_tilde, 1.0);
        let gate_back = self.gate_w.t_matvec(&g_gate_pre);
        let g_tilde: Vec<f64> = (0..d)
            .map(|i| g_star[i] * (1.0 - trace.m[i]) + gate_back[i])
            .collect();

        // ρ layer: z̃ = tanh(W_ρ[z‖u] + b_ρ).
        let g_rho_pre: Vec<f64> = (0..d)
            .map(|i| g_tilde[i] * (1.0 - trace.z_tilde[i] * trace.z_tilde[i]))
            .collect();
        let mut zu = Vec::with_capacity(2 * d);
        zu.extend_from_slice(&trace.z);
        zu.extend_from_slice(&trace.u);
        grads.rho_w.add_outer(&g_rho_pre, &zu, 1.0);
        for i in 0..d {
            grads.rho_b[i] += g_rho_pre[i];
        }
        let zu_back = self.rho_w.t_matvec(&g_rho_pre);
        for i in 0..d {
            g_u[i] += zu_back[d + i];
        }

        // φ layer: u = tanh(W_φ z + b_φ).
        let g_phi_pre: Vec<f64> = (0..d)
            .map(|i| g_u[i] * (1.0 - trace.u[i] * trace.u[i]))
            .collect();
        grads.phi_w.add_outer(&g_phi_pre, &trace.z, 1.0);
        for i in 0..d {
            grads.phi_b[i] += g_phi_pre[i];
        }
    }

    fn apply_update(&mut self, grads: &ProjectionGrads, lr: f64) {
        self.phi_w.axpy(&grads.phi_w, -lr);
        for (p, g) in self.phi_b.iter_mut().zip(&grads.phi_b) {
            *p -= lr * g;
        }
        for (hi, head) in [&mut self.psi_pass, &mut self.psi_fact, &mut self.psi_ent]
            .into_iter()
            .enumerate()
        {
            for (w, g) in head.w.iter_mut().zip(&grads.psi[hi].0) {
                *w -= lr * g;
            }
            head.b -= lr * grads.psi[hi].1;
        }
        self.rho_w.axpy(&grads.rho_w, -lr);
        for (p, g) in self.rho_b.iter_mut().zip(&grads.rho_b) {
            *p -= lr * g;
        }
        self.gate_w.axpy(&grads.gate_w, -lr);
    }

    /// Total number of trainable scalars; used by the gradient check.
    pub fn param_count(&self) -> usize {
        let d = self.dim;
        d * d + d + 3 * (d + 1) + d * 2 * d + d + d * d
    }

    /// Flat views over the trainable scalars, in a fixed order. Test-facing.
    pub fn get_flat(&self, idx: usize) -> f64 {
        self.flat_slot(idx).0
    }

    pub fn set_flat(&mut self, idx: usize, v: f64) {
        let d = self.dim;
        let mut i = idx;
        let sizes = [
            d * d, // phi_w
            d,     // phi_b
            d,     // psi_pass.w
            1,     // psi_pass.b
            d,     // psi_fact.w
            1,
            d,
            1,
            d * 2 * d, // rho_w
            d,         // rho_b
            d * d,     // gate_w
        ];
        for (slot, size) in sizes.iter().enumerate() {
            if i < *size {
                match slot {
                    0 => self.phi_w.data_mut()[i] = v,
                    1 => self.phi_b[i] = v,
                    2 => self.psi_pass.w[i] = v,
                    3 => self.psi_pass.b = v,
                    4 => self.psi_fact.w[i] = v,
                    5 => self.psi_fact.b = v,
                    6 => self.psi_ent.w[i] = v,
                    7 => self.psi_ent.b = v,
                    8 => self.rho_w.data_mut()[i] = v,
                    9 => self.rho_b[i] = v,
                    10 => self.gate_w.data_mut()[i] = v,
                    _ => unreachable!(),
                }
                return;
            }
            i -= size;
        }
        panic!("flat parameter index {idx} out of range");
    }

    fn flat_slot(&self, idx: usize) -> (f64, usize) {
        let d = self.dim;
        let mut i = idx;
        let sizes = [d * d, d, d, 1, d, 1, d, 1, d * 2 * d, d, d * d];
        for (slot, size) in sizes.iter().enumerate() {
            if i < *size {
                let v = match slot {
                    0 => self.phi_w.data()[i],
                    1 => self.phi_b[i],
                    2 => self.psi_pass.w[i],
                    3 => self.psi_pass.b,
                    4 => self.psi_fact.w[i],
                    5 => self.psi_fact.b,
                    6 => self.psi_ent.w[i],
                    7 => self.psi_ent.b,
                    8 => self.rho_w.data()[i],
                    9 => self.rho_b[i],
                    10 => self.gate_w.data()[i],
                    _ => unreachable!(),
                };
                return (v, slot);
            }
            i -= size;
        }
        panic!("flat parameter index {idx} out of range");
    }
}

/// Flat view over a gradient accumulator, mirroring `get_flat`. Test-facing.
impl ProjectionGrads {
    pub fn get_flat(&self, idx: usize, dim: usize) -> f64 {
        let d = dim;
        let mut i = idx;
        let sizes = [d * d, d, d, 1, d, 1, d, 1, d * 2 * d, d, d * d];
        for (slot, size) in sizes.iter().enumerate() {
            if i < *size {
                return match slot {
                    0 => self.phi_w.data()[i],
                    1 => self.phi_b[i],
                    2 => self.psi[0].0[i],
                    3 => self.psi[0].1,
                    4 => self.psi[1].0[i],
                    5 => self.psi[1].1,
                    6 => self.psi[2].0[i],
                    7 => self.psi[2].1,
                    8 => self.rho_w.data()[i],
                    9 => self.rho_b[i],
                    10 => self.gate_w.data()[i],
                    _ => unreachable!(),
                };
            }
            i -= size;
        }
        panic!("flat gradient index {idx} out of range");
    }
}

/// Margin hinge `[d⁺ - d⁻ + γ]₊`.
pub fn hinge(d_pos: f64, d_neg: f64, gamma: f64) -> f64 {
    (d_pos - d_neg + gamma).max(0.0)
}

/// Passage-to-fact containment loss: the passage must sit closer to its own
/// fact than to the sampled negative fact, by margin `gamma`.
pub fn loss_passage_to_fact(
    z_passage: &[f64],
    z_fact_pos: &[f64],
    z_fact_neg: &[f64],
    params: &ProjectionParams,
    gamma: f64,
) -> Result<f64> {
    let p = params.project_node(z_passage, NodeKind::Passage)?;
    let fp = params.project_node(z_fact_pos, NodeKind::Fact)?;
    let fnn = params.project_node(z_fact_neg, NodeKind::Fact)?;
    let d_pos = crate::geometry::geodesic_distance(&p, &fp)?;
    let d_neg = crate::geometry::geodesic_distance(&p, &fnn)?;
    Ok(hinge(d_pos, d_neg, gamma))
}

/// Fact-to-passage containment loss with the roles swapped: fact anchor,
/// passage positive/negative.
pub fn loss_fact_to_passage(
    z_fact: &[f64],
    z_passage_pos: &[f64],
    z_passage_neg: &[f64],
    params: &ProjectionParams,
    gamma: f64,
) -> Result<f64> {
    let f = params.project_node(z_fact, NodeKind::Fact)?;
    let pp = params.project_node(z_passage_pos, NodeKind::Passage)?;
    let pn = params.project_node(z_passage_neg, NodeKind::Passage)?;
    let d_pos = crate::geometry::geodesic_distance(&f, &pp)?;
    let d_neg = crate::geometry::geodesic_distance(&f, &pn)?;
    Ok(hinge(d_pos, d_neg, gamma))
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 0.1,
            learning_rate: 0.05,
            epochs: 200,
            negatives_per_positive: 1,
            seed: 42,
            batch_size: 65536,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.margin > 0.0
            && self.learning_rate > 0.0
            && self.epochs > 0
            && self.negatives_per_positive > 0
            && self.batch_size > 0;
        if !ok {
            return Err(EngineError::InvalidParameter(
                "train config fields must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform draw over `0..total` excluding the sorted `associated` indexes.
/// One RNG draw per call; `None` when no candidate exists.
pub fn sample_negative(
    total: usize,
    associated: &BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let candidates = total.checked_sub(associated.len())?;
    if candidates == 0 {
        return None;
    }
    let mut k = rng.random_range(0..candidates);
    for &a in associated {
        if a <= k {
            k += 1;
        } else {
            break;
        }
    }
    Some(k)
}

/// One contrastive term: anchor, positive, negative, as node references.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub anchor: (NodeKind, String),
    pub positive: (NodeKind, String),
    pub negative: (NodeKind, String),
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ProjectionParams,
    /// Full-batch loss per epoch, measured before that epoch's update.
    pub loss_trace: Vec<f64>,
    /// Anchors dropped because no valid negative existed.
    pub skipped_anchors: usize,
}

/// Evaluates the summed hinge loss over `terms` and accumulates analytic
/// gradients. Exposed for the finite-difference cross-check.
pub fn loss_and_grads(
    terms: &[LossTerm],
    embeddings: &EmbeddingCache,
    params: &ProjectionParams,
    gamma: f64,
) -> Result<(f64, ProjectionGrads)> {
    let mut traces: BTreeMap<(NodeKind, String), NodeTrace> = BTreeMap::new();
    let mut point_grads: BTreeMap<(NodeKind, String), Vec<f64>> = BTreeMap::new();

    let ensure_trace = |key: &(NodeKind, String),
                            traces: &mut BTreeMap<(NodeKind, String), NodeTrace>|
     -> Result<()> {
        if !traces.contains_key(key) {
            let z = embeddings
                .get(key.0, &key.1)
                .ok_or_else(|| EngineError::MissingEmbedding {
                    kind: key.0,
                    id: key.1.clone(),
                })?;
            traces.insert(key.clone(), params.forward(z, key.0)?);
        }
        Ok(())
    };

    let mut total = 0.0;
    let c = params.curvature().get();
    for term in terms {
        ensure_trace(&term.anchor, &mut traces)?;
        ensure_trace(&term.positive, &mut traces)?;
        ensure_trace(&term.negative, &mut traces)?;
        let xa = &traces[&term.anchor].point;
        let xp = &traces[&term.positive].point;
        let xn = &traces[&term.negative].point;
        let (d_pos, ga_pos, gp) = geodesic_distance_grad(xa, xp, c);
        let (d_neg, ga_neg, gn) = geodesic_distance_grad(xa, xn, c);
        let value = d_pos - d_neg + gamma;
        if value <= 0.0 {
            continue; // hinge inactive; subgradient at the kink taken as 0
        }
        total += value;
        let dim = params.dim();
        let acc = |store: &mut BTreeMap<(NodeKind, String), Vec<f64>>,
                   key: &(NodeKind, String),
                   grad: &[f64],
                   sign: f64| {
            let slot = store
                .entry(key.clone())
                .or_insert_with(|| vec![0.0; dim]);
            for (s, g) in slot.iter_mut().zip(grad) {
                *s += sign * g;
            }
        };
        acc(&mut point_grads, &term.anchor, &ga_pos, 1.0);
        acc(&mut point_grads, &term.anchor, &ga_neg, -1.0);
        acc(&mut point_grads, &term.positive, &gp, 1.0);
        acc(&mut point_grads, &term.negative, &gn, -1.0);
    }

    let mut grads = ProjectionGrads::zeros(params.dim());
    for (key, g_point) in &point_grads {
        params.backward(&traces[key], g_point, &mut grads);
    }
    Ok((total, grads))
}

/// Deterministically enumerates anchors and samples negatives for one epoch.
fn build_terms(
    passage_ids: &[String],
    fact_ids: &[String],
    facts_of_passage: &BTreeMap<String, Vec<usize>>,
    source_of_fact: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    skipped: &mut usize,
) -> Vec<LossTerm> {
    let mut terms = Vec::new();
    // Passage → fact direction.
    for pid in passage_ids {
        let Some(pos_facts) = facts_of_passage.get(pid) else {
            continue;
        };
        let associated: BTreeSet<usize> = pos_facts.iter().copied().collect();
        for &f_pos in pos_facts {
            let mut got_any = false;
            for _ in 0..cfg.negatives_per_positive {
                if let Some(f_neg) = sample_negative(fact_ids.len(), &associated, rng) {
                    got_any = true;
                    terms.push(LossTerm {
                        anchor: (NodeKind::Passage, pid.clone()),
                        positive: (NodeKind::Fact, fact_ids[f_pos].clone()),
                        negative: (NodeKind::Fact, fact_ids[f_neg].clone()),
                    });
                }
            }
            if !got_any {
                *skipped += 1;
            }
        }
    }
    // Fact → passage direction.
    for (fi, fid) in fact_ids.iter().enumerate() {
        let src = source_of_fact[fi];
        let associated: BTreeSet<usize> = [src].into_iter().collect();
        let mut got_any = false;
        for _ in 0..cfg.negatives_per_positive {
            if let Some(p_neg) = sample_negative(passage_ids.len(), &associated, rng) {
                got_any = true;
                terms.push(LossTerm {
                    anchor: (NodeKind::Fact, fid.clone()),
                    positive: (NodeKind::Passage, passage_ids[src].clone()),
                    negative: (NodeKind::Passage, passage_ids[p_neg].clone()),
                });
            }
        }
        if !got_any {
            *skipped += 1;
        }
    }
    terms
}

/// Trains the projection with plain full-batch gradient descent over the
/// passage↔fact containment pairs.
pub fn train(
    passages: &[Passage],
    facts: &[Fact],
    embeddings: &EmbeddingCache,
    init: ProjectionParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut passage_ids: Vec<String> = passages.iter().map(|p| p.passage_id.clone()).collect();
    passage_ids.sort();
    let mut fact_ids: Vec<String> = facts.iter().map(|f| f.fact_id.clone()).collect();
    fact_ids.sort();
    let fact_pos: BTreeMap<&str, usize> = fact_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let passage_pos: BTreeMap<&str, usize> = passage_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut facts_of_passage: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut source_of_fact = vec![0usize; fact_ids.len()];
    for f in facts {
        let fi = fact_pos[f.fact_id.as_str()];
        let pi = *passage_pos
            .get(f.source_passage.as_str())
            .ok_or_else(|| EngineError::UnknownId(format!("passage '{}'", f.source_passage)))?;
        source_of_fact[fi] = pi;
        facts_of_passage
            .entry(f.source_passage.clone())
            .or_default()
            .push(fi);
    }
    for v in facts_of_passage.values_mut() {
        v.sort();
    }

    let trainable = facts_of_passage
        .iter()
        .any(|(_, fs)| !fs.is_empty() && fs.len() < fact_ids.len());
    if fact_ids.is_empty() || passage_ids.is_empty() || !trainable {
        return Err(EngineError::NoTrainablePairs);
    }

    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut skipped = 0usize;

    for _epoch in 0..cfg.epochs {
        let terms = build_terms(
            &passage_ids,
            &fact_ids,
            &facts_of_passage,
            &source_of_fact,
            cfg,
            &mut rng,
            &mut skipped,
        );
        if terms.is_empty() {
            return Err(EngineError::NoTrainablePairs);
        }
        let mut epoch_loss = 0.0;
        for batch in terms.chunks(cfg.batch_size) {
            let (loss, grads) = loss_and_grads(batch, embeddings, &params, cfg.margin)?;
            epoch_loss += loss;
            params.apply_update(&grads, cfg.learning_rate);
        }
        loss_trace.push(epoch_loss);
    }

    Ok(TrainOutcome {
        params,
        loss_trace,
        skipped_anchors: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{Encoder, HashedBowEncoder};

    fn tiny_params(seed: u64) -> ProjectionParams {
        ProjectionParams::init(2, 0.4, 0.5, Curvature::new(1.0).unwrap(), seed).unwrap()
    }

    #[test]
    fn radial_constraint_enforced() {
        let c = Curvature::new(1.0).unwrap();
        assert!(ProjectionParams::init(2, 0.6, 0.5, c, 1).is_err());
        assert!(ProjectionParams::init(2, 0.0, 0.5, c, 1).is_err());
        assert!(ProjectionParams::init(2, 0.4, 0.5, c, 1).is_ok());
    }

    #[test]
    fn hierarchy_features_zero_weights_give_zero() {
        let mut p = tiny_params(3);
        p.phi_w = Matrix::zeros(2, 2);
        p.phi_b = vec![0.0, 0.0];
        assert_eq!(p.hierarchy_features(&[0.7, -0.3]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hierarchy_features_hand_fixture() {
        let mut p = tiny_params(3);
        p.phi_w = Matrix::from_rows(vec![vec![0.5, -0.25], vec![1.0, 0.75]]);
        p.phi_b = vec![0.1, -0.2];
        let got = p.hierarchy_features(&[1.0, 0.0]).unwrap();
        // Unrolled scalar arithmetic as the oracle.
        let want0 = (0.5 * 1.0 + -0.25 * 0.0 + 0.1f64).tanh();
        let want1 = (1.0 * 1.0 + 0.75 * 0.0 + -0.2f64).tanh();
        assert_eq!(got, vec![want0, want1]);
        assert!(got.iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn predict_depth_fixtures() {
        let mut p = tiny_params(4);
        p.psi_pass = DepthHead {
            w: vec![0.0, 0.0],
            b: 0.0,
        };
        assert_eq!(
            p.predict_depth(&[0.3, -0.8], NodeKind::Passage).unwrap(),
            0.5
        );
        p.psi_fact = DepthHead {
            w: vec![0.0, 0.0],
            b: 1e6,
        };
        let d = p.predict_depth(&[0.0, 0.0], NodeKind::Fact).unwrap();
        assert!(d <= 1.0 && d > 0.999999);
        p.psi_ent = DepthHead {
            w: vec![2.0, -1.0],
            b: 0.25,
        };
        let got = p.predict_depth(&[0.5, 0.5], NodeKind::Entity).unwrap();
        let want = 1.0 / (1.0 + (-(2.0 * 0.5 - 1.0 * 0.5 + 0.25f64)).exp());
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn gated_fuse_saturated_gate_returns_input() {
        let mut p = tiny_params(5);
        let mut gate = Matrix::zeros(2, 2);
        gate.set(0, 0, 1e9);
        gate.set(1, 1, 1e9);
        p.gate_w = gate;
        // Make z̃ strictly positive so the gate saturates to 1.
        p.rho_w = Matrix::zeros(2, 4);
        p.rho_b = vec![3.0, 3.0];
        let z = vec![0.4, -0.7];
        let u = p.hierarchy_features(&z).unwrap();
        let z_star = p.gated_fuse(&z, &u).unwrap();
        for (a, b) in z_star.iter().zip(&z) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn gated_fuse_zero_gate_averages() {
        let mut p = tiny_params(6);
        p.gate_w = Matrix::zeros(2, 2);
        let z = vec![0.5, -0.25];
        let u = p.hierarchy_features(&z).unwrap();
        let mut zu = z.clone();
        zu.extend_from_slice(&u);
        let mut z_tilde = p.rho_w.matvec(&zu);
        for (x, b) in z_tilde.iter_mut().zip(&p.rho_b) {
            *x = (*x + b).tanh();
        }
        let got = p.gated_fuse(&z, &u).unwrap();
        for i in 0..2 {
            assert!((got[i] - 0.5 * (z[i] + z_tilde[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn gated_fuse_hand_fixture() {
        let mut p = tiny_params(7);
        p.rho_w = Matrix::from_rows(vec![
            vec![0.5, 0.0, 0.25, 0.0],
            vec![0.0, -0.5, 0.0, 0.75],
        ]);
        p.rho_b = vec![0.05, -0.05];
        p.gate_w = Matrix::from_rows(vec![vec![1.0, 0.5], vec![-0.5, 0.25]]);
        let z = [0.6, -0.2];
        let u = [0.3, 0.1];
        // Oracle: fully unrolled arithmetic.
        let zt0 = (0.5 * 0.6 + 0.0 * -0.2 + 0.25 * 0.3 + 0.0 * 0.1 + 0.05f64).tanh();
        let zt1 = (0.0 * 0.6 + -0.5 * -0.2 + 0.0 * 0.3 + 0.75 * 0.1 - 0.05f64).tanh();
        let m0 = 1.0 / (1.0 + (-(1.0 * zt0 + 0.5 * zt1)).exp());
        let m1 = 1.0 / (1.0 + (-(-0.5 * zt0 + 0.25 * zt1)).exp());
        let want = [
            m0 * 0.6 + (1.0 - m0) * zt0,
            m1 * -0.2 + (1.0 - m1) * zt1,
        ];
        let got = p.gated_fuse(&z, &u).unwrap();
        assert!((got[0] - want[0]).abs() < 1e-15);
        assert!((got[1] - want[1]).abs() < 1e-15);
    }

    #[test]
    fn radial_align_norm_law() {
        let p = tiny_params(8);
        for (depth, want) in [(0.0, 0.4), (1.0, 0.9), (0.6, 0.7)] {
            let out = p.radial_align(&[3.0, 4.0], depth).unwrap();
            let n = crate::geometry::dot(&out, &out).sqrt();
            assert!((n - want).abs() < 1e-12, "depth {depth}: norm {n}");
        }
        let out = p.radial_align(&[3.0, 4.0], 0.6).unwrap();
        assert!((out[0] - 0.42).abs() < 1e-12);
        assert!((out[1] - 0.56).abs() < 1e-12);
    }

    #[test]
    fn project_node_stays_inside_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for c in [0.5, 1.0, 2.0] {
            let params =
                ProjectionParams::init(4, 0.4, 0.5, Curvature::new(c).unwrap(), 17).unwrap();
            for _ in 0..200 {
                let z: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let kind = match rng.random_range(0..3) {
                    0 => NodeKind::Passage,
                    1 => NodeKind::Fact,
                    _ => NodeKind::Entity,
                };
                let point = params.project_node(&z, kind).unwrap();
                let sqrt_c_norm = c.sqrt() * point.norm();
                assert!(sqrt_c_norm <= 1.0 - BALL_EPS + 1e-15);
                // Radius bound from the norm law: tanh(sqrt(c)·(α+β)).
                assert!(sqrt_c_norm <= (c.sqrt() * 0.9f64).tanh() + 1e-12);
            }
        }
    }

    #[test]
    fn project_node_deterministic() {
        let params = tiny_params(21);
        let z = vec![0.3, -0.9];
        let a = params.project_node(&z, NodeKind::Fact).unwrap();
        let b = params.project_node(&z, NodeKind::Fact).unwrap();
        assert_eq!(a.coords(), b.coords());
    }

    #[test]
    fn project_node_matches_stage_composition() {
        let params = tiny_params(22);
        let z = vec![0.8, 0.15];
        let u = params.hierarchy_features(&z).unwrap();
        let depth = params.predict_depth(&u, NodeKind::Passage).unwrap();
        let z_star = params.gated_fuse(&z, &u).unwrap();
        let aligned = params.radial_align(&z_star, depth).unwrap();
        let by_stages = crate::geometry::exp_map_origin(
            &crate::geometry::TangentVector::new(aligned),
            params.curvature(),
        );
        let direct = params.project_node(&z, NodeKind::Passage).unwrap();
        for (a, b) in direct.coords().iter().zip(by_stages.coords()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hinge_fixtures() {
        assert_eq!(hinge(0.2, 0.5, 0.1), 0.0);
        assert!((hinge(0.5, 0.2, 0.1) - 0.4).abs() < 1e-15);
        assert_eq!(hinge(0.3, 0.3, 0.1), 0.1);
    }

    #[test]
    fn losses_equal_positive_negative_give_margin() {
        let params = tiny_params(30);
        let z_p = [0.2, 0.4];
        let z_f = [0.9, -0.1];
        let l = loss_passage_to_fact(&z_p, &z_f, &z_f, &params, 0.1).unwrap();
        assert!((l - 0.1).abs() < 1e-15);
        let l2 = loss_fact_to_passage(&z_f, &z_p, &z_p, &params, 0.1).unwrap();
        assert!((l2 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sample_negative_only_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let associated: BTreeSet<usize> = [0].into_iter().collect();
        for _ in 0..20 {
            assert_eq!(sample_negative(2, &associated, &mut rng), Some(1));
        }
        let all: BTreeSet<usize> = [0, 1].into_iter().collect();
        assert_eq!(sample_negative(2, &all, &mut rng), None);
    }

    #[test]
    fn sample_negative_uniform_chi_square() {
        // 10,000 draws over 5 free candidates out of 7 (2 excluded); the
        // chi-square statistic with 4 dof must stay inside the 95% band.
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let associated: BTreeSet<usize> = [2, 5].into_iter().collect();
        let mut counts = BTreeMap::new();
        for _ in 0..10_000 {
            let s = sample_negative(7, &associated, &mut rng).unwrap();
            assert!(!associated.contains(&s));
            *counts.entry(s).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 5);
        let expected = 10_000.0 / 5.0;
        let chi2: f64 = counts
            .values()
            .map(|&o| {
                let diff = o as f64 - expected;
                diff * diff / expected
            })
            .sum();
        assert!(chi2 < 9.488, "chi2 = {chi2}");
    }

    #[test]
    fn sample_negative_seed_reproducible() {
        let associated: BTreeSet<usize> = [1, 3].into_iter().collect();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_negative(9, &associated, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    fn fixture_corpus(dim: usize) -> (Vec<Passage>, Vec<Fact>, EmbeddingCache) {
        let enc = HashedBowEncoder::new(dim).unwrap();
        let texts = [
            ("p0", "alpha particles scatter through gold foil"),
            ("p1", "tulip bulbs bloom in dutch spring gardens"),
            ("p2", "glaciers carve valleys over many centuries"),
        ];
        let passages: Vec<Passage> = texts
            .iter()
            .enumerate()
            .map(|(i, (id, t))| Passage {
                passage_id: id.to_string(),
                doc_id: format!("d{i}"),
                ordinal: 0,
                text: t.to_string(),
            })
            .collect();
        let fact_rows = [
            ("f0", "p0", "alpha particles scatter gold"),
            ("f1", "p0", "foil deflects particles"),
            ("f2", "p1", "tulips bloom spring"),
            ("f3", "p2", "glaciers carve valleys"),
        ];
        let facts: Vec<Fact> = fact_rows
            .iter()
            .map(|(id, src, text)| Fact {
                fact_id: id.to_string(),
                subject: "s".into(),
                relation: "r".into(),
                object: "o".into(),
                source_passage: src.to_string(),
                text: text.to_string(),
            })
            .collect();
        let mut cache = EmbeddingCache::new(dim, &enc.fingerprint());
        for p in &passages {
            cache
                .insert(NodeKind::Passage, &p.passage_id, enc.encode(&p.text).unwrap())
                .unwrap();
        }
        for f in &facts {
            cache
                .insert(NodeKind::Fact, &f.fact_id, enc.encode(&f.text).unwrap())
                .unwrap();
        }
        (passages, facts, cache)
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let dim = 2;
        let (_passages, _facts, cache) = fixture_corpus(dim);
        let params = ProjectionParams::init(
            dim,
            0.4,
            0.5,
            Curvature::new(1.0).unwrap(),
            2024,
        )
        .unwrap();
        let gamma = 0.1;
        // Positives farther than negatives so every hinge is active; an
        // inactive hinge would make the check compare zeros against zeros.
        let terms = vec![
            LossTerm {
                anchor: (NodeKind::Passage, "p0".into()),
                positive: (NodeKind::Fact, "f2".into()),
                negative: (NodeKind::Fact, "f0".into()),
            },
            LossTerm {
                anchor: (NodeKind::Fact, "f3".into()),
                positive: (NodeKind::Passage, "p1".into()),
                negative: (NodeKind::Passage, "p2".into()),
            },
        ];
        // Verify the hinges are active and sit away from the kink.
        for t in &terms {
            let za = cache.get(t.anchor.0, &t.anchor.1).unwrap();
            let zp = cache.get(t.positive.0, &t.positive.1).unwrap();
            let zn = cache.get(t.negative.0, &t.negative.1).unwrap();
            let pa = params.project_node(za, t.anchor.0).unwrap();
            let pp = params.project_node(zp, t.positive.0).unwrap();
            let pn = params.project_node(zn, t.negative.0).unwrap();
            let dp = crate::geometry::geodesic_distance(&pa, &pp).unwrap();
            let dn = crate::geometry::geodesic_distance(&pa, &pn).unwrap();
            assert!(
                dp - dn + gamma > 1e-3,
                "hinge inactive or too close to its kink"
            );
        }

        let (loss, grads) = loss_and_grads(&terms, &cache, &params, gamma).unwrap();
        assert!(loss > 0.0);
        let h = 1e-5;
        let n = params.param_count();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        let mut max_abs_grad = 0.0f64;
        for _ in 0..20 {
            let idx = rng.random_range(0..n);
            let orig = params.get_flat(idx);
            let mut plus = params.clone();
            plus.set_flat(idx, orig + h);
            let mut minus = params.clone();
            minus.set_flat(idx, orig - h);
            let (lp, _) = loss_and_grads(&terms, &cache, &plus, gamma).unwrap();
            let (lm, _) = loss_and_grads(&terms, &cache, &minus, gamma).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.get_flat(idx, dim);
            max_abs_grad = max_abs_grad.max(an.abs());
            let denom = fd.abs().max(an.abs()).max(1e-8);
            let rel = (fd - an).abs() / denom;
            worst = worst.max(rel);
            assert!(rel < 1e-4, "param {idx}: fd {fd} vs analytic {an} (rel {rel})");
        }
        assert!(max_abs_grad > 0.0, "all sampled gradients were zero");
        assert!(worst < 1e-4);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let dim = 16;
        let (passages, facts, cache) = fixture_corpus(dim);
        let init = ProjectionParams::init(dim, 0.4, 0.5, Curvature::new(1.0).unwrap(), 42)
            .unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        };
        let out1 = train(&passages, &facts, &cache, init.clone(), &cfg).unwrap();
        let out2 = train(&passages, &facts, &cache, init, &cfg).unwrap();
        assert!(out1.loss_trace[0] > 0.0);
        assert!(
            out1.loss_trace.last().unwrap() < &out1.loss_trace[0],
            "trace: first {} last {}",
            out1.loss_trace[0],
            out1.loss_trace.last().unwrap()
        );
        assert_eq!(out1.params, out2.params);
        assert_eq!(out1.loss_trace, out2.loss_trace);
    }

    #[test]
    fn training_noop_when_margins_already_satisfied() {
        // Anchor texts equal their positive facts: d⁺ = 0, and with a tiny
        // margin every negative clears the hinge, so parameters never move.
        let dim = 8;
        let enc = HashedBowEncoder::new(dim).unwrap();
        let passages: Vec<Passage> = [("p0", "quasar jets"), ("p1", "moss gardens")]
            .iter()
            .map(|(id, t)| Passage {
                passage_id: id.to_string(),
                doc_id: id.to_string(),
                ordinal: 0,
                text: t.to_string(),
            })
            .collect();
        let facts: Vec<Fact> = [("f0", "p0", "quasar jets"), ("f1", "p1", "moss gardens")]
            .iter()
            .map(|(id, src, t)| Fact {
                fact_id: id.to_string(),
                subject: "s".into(),
                relation: "r".into(),
                object: "o".into(),
                source_passage: src.to_string(),
                text: t.to_string(),
            })
            .collect();
        let mut cache = EmbeddingCache::new(dim, &enc.fingerprint());
        for p in &passages {
            cache
                .insert(NodeKind::Passage, &p.passage_id, enc.encode(&p.text).unwrap())
                .unwrap();
        }
        for f in &facts {
            cache
                .insert(NodeKind::Fact, &f.fact_id, enc.encode(&f.text).unwrap())
                .unwrap();
        }
        let init = ProjectionParams::init(dim, 0.4, 0.5, Curvature::new(1.0).unwrap(), 7)
            .unwrap();
        let cfg = TrainConfig {
            margin: 1e-9,
            epochs: 5,
            ..TrainConfig::default()
        };
        let out = train(&passages, &facts, &cache, init.clone(), &cfg).unwrap();
        assert!(out.loss_trace.iter().all(|&l| l == 0.0));
        assert_eq!(out.params, init);
    }

    #[test]
    fn training_rejects_empty_pairs() {
        let cache = EmbeddingCache::new(4, "fp");
        let init = ProjectionParams::init(4, 0.4, 0.5, Curvature::new(1.0).unwrap(), 1)
            .unwrap();
        let err = train(&[], &[], &cache, init, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, EngineError::NoTrainablePairs));
    }
}
