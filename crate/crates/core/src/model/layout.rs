//! Packed free-variable layout `x = [free y entries.., r..]` and the load kernels.
//!
//! For request `n` with path `p_0..p_{K-1}`, hop `k` is the response edge
//! `p_{k+1} → p_k`, whose load term is `(λ̄ − r)·P_k` with
//! `P_k = Π_{j≤k} (1 − y_{p_j})`.

use super::{validate_instance, Instance, Strategy};
use crate::error::Result;

pub(crate) const FIXED: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum VarSet {
    /// Every non-server entry is a variable.
    Full,
    /// Only entries that can change a link load and have cache room.
    Reduced,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub n_nodes: usize,
    pub n_items: usize,
    pub n_req: usize,
    pub n_y: usize,
    #[allow(dead_code)]
    pub y_var: Vec<usize>,
    pub y_of_var: Vec<(usize, usize)>,
    pub demand: Vec<f64>,
    /// Per request, variable index of each prefix node (FIXED when held at 0).
    pub prefix: Vec<Vec<usize>>,
    /// Per request, edge index of each response hop.
    pub hop_edge: Vec<Vec<usize>>,
    pub edge_demand: Vec<f64>,
    pub edge_paths: Vec<usize>,
    pub capacity: Vec<f64>,
    pub cache_cap: Vec<f64>,
    pub node_vars: Vec<Vec<usize>>,
    pub upper: Vec<f64>,
    pub pinned: Vec<(usize, usize)>,
}

impl Layout {
    pub fn new(inst: &Instance, set: VarSet) -> Result<Layout> {
        validate_instance(inst).into_result()?;
        let n_nodes = inst.node_count();
        let n_items = inst.catalog_size;
        let eff = inst.effective_cache_capacity();
        let mut relevant = vec![false; n_nodes * n_items];
        for q in &inst.requests {
            for &v in &q.path[..q.path.len() - 1] {
                relevant[v * n_items + q.item] = true;
            }
        }
        let mut y_var = vec![FIXED; n_nodes * n_items];
        let mut y_of_var = Vec::new();
        let mut node_vars = vec![Vec::new(); n_nodes];
        let mut pinned = Vec::new();
        for v in 0..n_nodes {
            for i in 0..n_items {
                if inst.is_server(v, i) {
                    pinned.push((v, i));
                    continue;
                }
                let keep = match set {
                    VarSet::Full => true,
                    VarSet::Reduced => eff[v] > 0 && relevant[v * n_items + i],
                };
                if keep {
                    y_var[v * n_items + i] = y_of_var.len();
                    node_vars[v].push(y_of_var.len());
                    y_of_var.push((v, i));
                }
            }
        }
        let n_y = y_of_var.len();
        let demand = inst.demand();
        let m = inst.graph.edge_count();
        let mut edge_demand = vec![0.0; m];
        let mut edge_paths = vec![0usize; m];
        let mut prefix = Vec::with_capacity(inst.requests.len());
        let mut hop_edge = Vec::with_capacity(inst.requests.len());
        for q in &inst.requests {
            let hops = q.path.len() - 1;
            let mut pre = Vec::with_capacity(hops);
            let mut edges = Vec::with_capacity(hops);
            for k in 0..hops {
                pre.push(y_var[q.path[k] * n_items + q.item]);
                let e = inst
                    .graph
                    .edge_index(q.path[k + 1], q.path[k])
                    .expect("validated symmetric graph");
                edge_demand[e] += q.demand;
                edge_paths[e] += 1;
                edges.push(e);
            }
            prefix.push(pre);
            hop_edge.push(edges);
        }
        let mut upper = vec![1.0; n_y];
        upper.extend_from_slice(&demand);
        Ok(Layout {
            n_nodes,
            n_items,
            n_req: inst.requests.len(),
            n_y,
            y_var,
            y_of_var,
            demand,
            prefix,
            hop_edge,
            edge_demand,
            edge_paths,
            capacity: inst.link_capacity.clone(),
            cache_cap: eff.iter().map(|&c| c.max(0) as f64).collect(),
            node_vars,
            upper,
            pinned,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_y + self.n_req
    }

    pub fn n_edges(&self) -> usize {
        self.capacity.len()
    }

    pub fn r<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.n_y..]
    }

    /// Edges crossed by at least one response.
    pub fn busy_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_edges()).filter(|&e| self.edge_paths[e] > 0)
    }

    /// `Σλ̄ − C` per edge.
    pub fn threshold(&self, e: usize) -> f64 {
        self.edge_demand[e] - self.capacity[e]
    }

    pub fn pack(&self, s: &Strategy) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_vars());
        x.extend(self.y_of_var.iter().map(|&(v, i)| s.y[v][i]));
        x.extend_from_slice(&s.r);
        x
    }

    pub fn unpack(&self, x: &[f64]) -> Strategy {
        let mut y = vec![vec![0.0; self.n_items]; self.n_nodes];
        for (k, &(v, i)) in self.y_of_var.iter().enumerate() {
            y[v][i] = x[k];
        }
        for &(v, i) in &self.pinned {
            y[v][i] = 1.0;
        }
        Strategy {
            y,
            r: x[self.n_y..].to_vec(),
        }
    }

    /// Starting point with empty caches and every request rejected.
    pub fn rejecting_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_y];
        x.extend_from_slice(&self.demand);
        x
    }

    pub fn project(&self, x: &mut [f64]) {
        for (xi, &u) in x.iter_mut().zip(&self.upper) {
            *xi = xi.clamp(0.0, u);
        }
    }

    #[inline]
    fn yv(x: &[f64], var: usize) -> f64 {
        if var == FIXED {
            0.0
        } else {
            x[var]
        }
    }

    /// Fills `p` with the prefix products of request `n`.
    #[inline]
    fn products(&self, x: &[f64], n: usize, p: &mut Vec<f64>) {
        p.clear();
        let mut acc = 1.0;
        for &var in &self.prefix[n] {
            acc *= 1.0 - Self::yv(x, var);
            p.push(acc);
        }
    }

    pub fn loads(&self, x: &[f64]) -> Vec<f64> {
        let mut rho = vec![0.0; self.n_edges()];
        let mut p = Vec::new();
        for n in 0..self.n_req {
            let a = self.demand[n] - x[self.n_y + n];
            self.products(x, n, &mut p);
            for (k, &e) in self.hop_edge[n].iter().enumerate() {
                rho[e] += a * p[k];
            }
        }
        rho
    }

    pub fn cache_usage(&self, x: &[f64]) -> Vec<f64> {
        self.node_vars
            .iter()
            .map(|vars| vars.iter().map(|&k| x[k]).sum())
            .collect()
    }

    /// `out += scale · ∇(Σ_e u_e ρ_e)`.
    pub fn add_load_gradient(&self, x: &[f64], u: &[f64], scale: f64, out: &mut [f64]) {
        let mut p = Vec::new();
        let mut q = Vec::new();
        for n in 0..self.n_req {
            let edges = &self.hop_edge[n];
            if edges.iter().all(|&e| u[e] == 0.0) {
                continue;
            }
            let a = self.demand[n] - x[self.n_y + n];
            self.products(x, n, &mut p);
            self.suffix_weights(x, n, u, &mut q);
            let mut dr = 0.0;
            for (k, &e) in edges.iter().enumerate() {
                dr += u[e] * p[k];
            }
            out[self.n_y + n] -= scale * dr;
            let mut before = 1.0;
            for (j, &var) in self.prefix[n].iter().enumerate() {
                if var != FIXED {
                    out[var] -= scale * a * before * q[j];
                }
                before = p[j];
            }
        }
    }

    /// `Q_j = Σ_{k≥j} u_k Π_{j<i≤k} (1 − y_i)`.
    #[inline]
    fn suffix_weights(&self, x: &[f64], n: usize, u: &[f64], q: &mut Vec<f64>) {
        let edges = &self.hop_edge[n];
        let pre = &self.prefix[n];
        let h = edges.len();
        q.clear();
        q.resize(h, 0.0);
        let mut acc = 0.0;
        for j in (0..h).rev() {
            acc = if j + 1 < h {
                u[edges[j]] + (1.0 - Self::yv(x, pre[j + 1])) * acc
            } else {
                u[edges[j]]
            };
            q[j] = acc;
        }
    }

    /// Per-edge directional derivative `∇ρ_e · v`.
    pub fn load_directional(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut d_rho = vec![0.0; self.n_edges()];
        let mut p = Vec::new();
        for n in 0..self.n_req {
            let a = self.demand[n] - x[self.n_y + n];
            let vr = v[self.n_y + n];
            self.products(x, n, &mut p);
            let mut d = 0.0;
            let mut before = 1.0;
            for (k, &e) in self.hop_edge[n].iter().enumerate() {
                let var = self.prefix[n][k];
                let (yk, vk) = if var == FIXED { (0.0, 0.0) } else { (x[var], v[var]) };
                d = d * (1.0 - yk) + vk * before;
                before = p[k];
                d_rho[e] += -p[k] * vr - a * d;
            }
        }
        d_rho
    }

    /// `out += scale · ∇²(Σ_e u_e ρ_e) · v`.
    pub fn add_load_hvp(&self, x: &[f64], u: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
        let mut p = Vec::new();
        let mut q = Vec::new();
        for n in 0..self.n_req {
            let edges = &self.hop_edge[n];
            if edges.iter().all(|&e| u[e] == 0.0) {
                continue;
            }
            let a = self.demand[n] - x[self.n_y + n];
            let ri = self.n_y + n;
            let vr = v[ri];
            let pre = &self.prefix[n];
            let h = pre.len();
            self.products(x, n, &mut p);
            self.suffix_weights(x, n, u, &mut q);
            for j in 0..h {
                let vj = pre[j];
                if vj == FIXED {
                    continue;
                }
                let before_j = if j == 0 { 1.0 } else { p[j - 1] };
                // cross term with r
                let c_rj = before_j * q[j];
                out[ri] += scale * c_rj * v[vj];
                out[vj] += scale * c_rj * vr;
                // cross terms with later prefix entries
                let mut between = before_j;
                for l in (j + 1)..h {
                    let vl = pre[l];
                    if vl != FIXED {
                        let c = a * between * q[l];
                        out[vj] += scale * c * v[vl];
                        out[vl] += scale * c * v[vj];
                    }
                    between *= 1.0 - Self::yv(x, pre[l]);
                }
            }
        }
    }

    /// `g̃_e = Σ λ̄·min{1, r/λ̄ + Σ_{j≤k} y_j}` per edge.
    pub fn g_tilde(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_edges()];
        for n in 0..self.n_req {
            let lam = self.demand[n];
            let mut arg = x[self.n_y + n] / lam;
            for (k, &e) in self.hop_edge[n].iter().enumerate() {
                arg += Self::yv(x, self.prefix[n][k]);
                out[e] += lam * arg.min(1.0);
            }
        }
        out
    }

    /// `out += Σ_e u_e ∂g̃_e` using the flat branch at the kink.
    pub fn add_g_tilde_supergradient(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        for n in 0..self.n_req {
            let lam = self.demand[n];
            let edges = &self.hop_edge[n];
            let pre = &self.prefix[n];
            let mut arg = x[self.n_y + n] / lam;
            // weight accumulated by each prefix position from active hops at or after it
            let mut active = vec![0.0; edges.len()];
            for (k, &e) in edges.iter().enumerate() {
                arg += Self::yv(x, pre[k]);
                if arg < 1.0 && u[e] != 0.0 {
                    active[k] = u[e];
                }
            }
            let mut tail = 0.0;
            for k in (0..edges.len()).rev() {
                tail += active[k];
                if pre[k] != FIXED {
                    out[pre[k]] += lam * tail;
                }
            }
            out[self.n_y + n] += tail;
        }
    }
}
