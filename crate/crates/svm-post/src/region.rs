//! Decision-region lattice for two-dimensional visualizations: a grid of
//! predicted labels over explicit bounds plus the PCA-projected training
//! points, exportable as plot-ready CSV.

use crate::multiclass::SvmModel;
use crate::pca::PcaModel;
use crate::SvmError;

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRegion {
    /// (x_min, x_max, y_min, y_max)
    pub bounds: (f64, f64, f64, f64),
    pub resolution: usize,
    /// One predicted label per lattice cell, row-major over (y, x).
    pub grid_labels: Vec<usize>,
    /// Projected training points with their true labels.
    pub points: Vec<(f64, f64, usize)>,
}

/// Evaluates `svm` (trained on 2-D projections) over a resolution x
/// resolution lattice. `bounds` of `None` derives them from the projected
/// points with a 10% margin.
pub fn decision_region_grid(
    svm: &SvmModel,
    pca: &PcaModel,
    features: &[Vec<f64>],
    labels: &[usize],
    bounds: Option<(f64, f64, f64, f64)>,
    resolution: usize,
) -> Result<DecisionRegion, SvmError> {
    if pca.n_components() != 2 {
        return Err(SvmError::Config(format!(
            "decision region requires a 2-component PCA, got {}",
            pca.n_components()
        )));
    }
    if svm.dim != 2 {
        return Err(SvmError::Config(
            "decision region requires an SVM trained on 2-D projections".into(),
        ));
    }
    if resolution == 0 {
        return Err(SvmError::Config("resolution must be positive".into()));
    }
    if features.len() != labels.len() {
        return Err(SvmError::Input("features and labels differ in length".into()));
    }
    let projected = pca.transform_batch(features);
    let bounds = match bounds {
        Some(b) => b,
        None => {
            let xs: Vec<f64> = projected.iter().map(|p| p[0]).collect();
            let ys: Vec<f64> = projected.iter().map(|p| p[1]).collect();
            let (x0, x1) = min_max(&xs);
            let (y0, y1) = min_max(&ys);
            let mx = 0.1 * (x1 - x0).max(1e-9);
            let my = 0.1 * (y1 - y0).max(1e-9);
            (x0 - mx, x1 + mx, y0 - my, y1 + my)
        }
    };
    let (x0, x1, y0, y1) = bounds;
    let step = |lo: f64, hi: f64, i: usize| {
        if resolution == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (resolution - 1) as f64
        }
    };
    let mut grid_labels = Vec::with_capacity(resolution * resolution);
    for yi in 0..resolution {
        let y = step(y0, y1, yi);
        for xi in 0..resolution {
            let x = step(x0, x1, xi);
            grid_labels.push(svm.predict_one(&[x, y])?.label);
        }
    }
    let points = projected
        .iter()
        .zip(labels)
        .map(|(p, &l)| (p[0], p[1], l))
        .collect();
    Ok(DecisionRegion { bounds, resolution, grid_labels, points })
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

impl DecisionRegion {
    /// Lattice CSV: `x,y,label`, row-major over (y, x).
    pub fn grid_csv(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds;
        let res = self.resolution;
        let step = |lo: f64, hi: f64, i: usize| {
            if res == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (res - 1) as f64
            }
        };
        let mut out = String::from("x,y,label\n");
        for yi in 0..res {
            for xi in 0..res {
                let label = self.grid_labels[yi * res + xi];
                out.push_str(&format!("{},{},{label}\n", step(x0, x1, xi), step(y0, y1, yi)));
            }
        }
        out
    }

    /// Projected-point CSV: `x,y,label`.
    pub fn points_csv(&self) -> String {
        let mut out = String::from("x,y,label\n");
        for (x, y, label) in &self.points {
            out.push_str(&format!("{x},{y},{label}\n"));
        }
        out
    }

    /// Label of the lattice cell nearest to a projected point.
    pub fn nearest_cell_label(&self, x: f64, y: f64) -> usize {
        let (x0, x1, y0, y1) = self.bounds;
        let res = self.resolution;
        let clamp = |v: f64, lo: f64, hi: f64| v.max(lo).min(hi);
        let fx = if res == 1 { 0.0 } else { (clamp(x, x0, x1) - x0) / (x1 - x0) * (res - 1) as f64 };
        let fy = if res == 1 { 0.0 } else { (clamp(y, y0, y1) - y0) / (y1 - y0) * (res - 1) as f64 };
        let xi = fx.round() as usize;
        let yi = fy.round() as usize;
        self.grid_labels[yi.min(res - 1) * res + xi.min(res - 1)]
    }
}
