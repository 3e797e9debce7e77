//! Fused LSTM forward pass and backpropagation through time.
//!
//! The cell follows the standard formulation: sigmoid input/forget/output
//! gates, tanh cell candidate and output nonlinearity, zero initial hidden
//! and cell state. Weights are stored row-major as `w: [D,4U]`, `r: [U,4U]`,
//! `b: [4U]` with gate order input, forget, cell, output along the last
//! axis.

use crate::tape::sigmoid;

pub(crate) struct LstmCache {
    t_steps: usize,
    d: usize,
    units: usize,
    /// Post-activation gate values per step, `[T,4U]`.
    gates: Vec<f64>,
    /// Cell states per step, `[T,U]`.
    cells: Vec<f64>,
    /// `tanh(c_t)` per step, `[T,U]`.
    tanh_c: Vec<f64>,
    /// Hidden states per step, `[T,U]`.
    hidden: Vec<f64>,
}

pub(crate) struct LstmGrads {
    pub d_seq: Vec<f64>,
    pub d_w: Vec<f64>,
    pub d_r: Vec<f64>,
    pub d_b: Vec<f64>,
}

pub(crate) fn lstm_forward(
    seq: &[f64],
    w: &[f64],
    r: &[f64],
    b: &[f64],
    t_steps: usize,
    d: usize,
    units: usize,
) -> (Vec<f64>, LstmCache) {
    let gate_width = 4 * units;
    let mut gates = vec![0.0; t_steps * gate_width];
    let mut cells = vec![0.0; t_steps * units];
    let mut tanh_c = vec![0.0; t_steps * units];
    let mut hidden = vec![0.0; t_steps * units];
    let mut z = vec![0.0; gate_width];

    for t in 0..t_steps {
        z.copy_from_slice(b);
        let x = &seq[t * d..(t + 1) * d];
        for (di, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[di * gate_width..(di + 1) * gate_width];
            for (zj, wj) in z.iter_mut().zip(wrow) {
                *zj += xv * wj;
            }
        }
        if t > 0 {
            let h_prev = &hidden[(t - 1) * units..t * units];
            for (u, &hv) in h_prev.iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                let rrow = &r[u * gate_width..(u + 1) * gate_width];
                for (zj, rj) in z.iter_mut().zip(rrow) {
                    *zj += hv * rj;
                }
            }
        }
        let gstep = &mut gates[t * gate_width..(t + 1) * gate_width];
        for u in 0..units {
            gstep[u] = sigmoid(z[u]); // input
            gstep[units + u] = sigmoid(z[units + u]); // forget
            gstep[2 * units + u] = z[2 * units + u].tanh(); // cell candidate
            gstep[3 * units + u] = sigmoid(z[3 * units + u]); // output
        }
        for u in 0..units {
            let c_prev = if t > 0 { cells[(t - 1) * units + u] } else { 0.0 };
            let c = gstep[units + u] * c_prev + gstep[u] * gstep[2 * units + u];
            let tc = c.tanh();
            cells[t * units + u] = c;
            tanh_c[t * units + u] = tc;
            hidden[t * units + u] = gstep[3 * units + u] * tc;
        }
    }
    let out = hidden.clone();
    (out, LstmCache { t_steps, d, units, gates, cells, tanh_c, hidden })
}

pub(crate) fn lstm_backward(
    seq: &[f64],
    w: &[f64],
    r: &[f64],
    cache: &LstmCache,
    grad_out: &[f64],
) -> LstmGrads {
    let (t_steps, d, units) = (cache.t_steps, cache.d, cache.units);
    let gate_width = 4 * units;
    let mut d_seq = vec![0.0; t_steps * d];
    let mut d_w = vec![0.0; d * gate_width];
    let mut d_r = vec![0.0; units * gate_width];
    let mut d_b = vec![0.0; gate_width];
    let mut dh_next = vec![0.0; units];
    let mut dc_next = vec![0.0; units];
    let mut dz = vec![0.0; gate_width];

    for t in (0..t_steps).rev() {
        let gstep = &cache.gates[t * gate_width..(t + 1) * gate_width];
        for u in 0..units {
            let i = gstep[u];
            let f = gstep[units + u];
            let g = gstep[2 * units + u];
            let o = gstep[3 * units + u];
            let tc = cache.tanh_c[t * units + u];
            let c_prev = if t > 0 { cache.cells[(t - 1) * units + u] } else { 0.0 };

            let dh = grad_out[t * units + u] + dh_next[u];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[u];
            let d_o = dh * tc;
            let d_f = dc * c_prev;
            let d_i = dc * g;
            let d_g = dc * i;
            dz[u] = d_i * i * (1.0 - i);
            dz[units + u] = d_f * f * (1.0 - f);
            dz[2 * units + u] = d_g * (1.0 - g * g);
            dz[3 * units + u] = d_o * o * (1.0 - o);
            dc_next[u] = dc * f;
        }
        for (db, &z) in d_b.iter_mut().zip(&dz) {
            *db += z;
        }
        let x = &seq[t * d..(t + 1) * d];
        for (di, &xv) in x.iter().enumerate() {
            let wrow = &w[di * gate_width..(di + 1) * gate_width];
            let dwrow = &mut d_w[di * gate_width..(di + 1) * gate_width];
            let mut acc = 0.0;
            for j in 0..gate_width {
                dwrow[j] += xv * dz[j];
                acc += wrow[j] * dz[j];
            }
            d_seq[t * d + di] = acc;
        }
        if t > 0 {
            let h_prev = &cache.hidden[(t - 1) * units..t * units];
            for (u, &hv) in h_prev.iter().enumerate() {
                let rrow = &r[u * gate_width..(u + 1) * gate_width];
                let drrow = &mut d_r[u * gate_width..(u + 1) * gate_width];
                let mut acc = 0.0;
                for j in 0..gate_width {
                    drrow[j] += hv * dz[j];
                    acc += rrow[j] * dz[j];
                }
                dh_next[u] = acc;
            }
        }
    }
    LstmGrads { d_seq, d_w, d_r, d_b }
}
