use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    per_timestep_importance, AttentionExplanation, LimeExplanation, PfiReport, SaliencyMap,
    ShapExplanation,
};
use crate::numerics::Matrix;
use crate::trajectory::Component;

/// Common on-disk form of every explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationExport {
    pub method: String,
    pub component: String,
    pub shape: Vec<usize>,
    pub values: Value,
    pub meta: Map<String, Value>,
    pub per_timestep: Option<Vec<f64>>,
}

fn nested(m: &Matrix) -> Value {
    Value::Array((0..m.rows()).map(|r| json!(m.row(r))).collect())
}

fn meta(pairs: Value) -> Map<String, Value> {
    match pairs {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

impl ExplanationExport {
    /// Rebuilds the `values` grid as a matrix when it is two-dimensional.
    pub fn values_matrix(&self) -> Option<Matrix> {
        let rows: Vec<Vec<f64>> = self
            .values
            .as_array()?
            .iter()
            .map(|r| r.as_array()?.iter().map(Value::as_f64).collect())
            .collect::<Option<_>>()?;
        Matrix::from_rows(&rows).ok()
    }

    pub fn from_lime(e: &LimeExplanation) -> Self {
        let c = e.component.index();
        Self {
            method: "lime".into(),
            component: e.component.name().into(),
            shape: vec![e.coeffs[c].rows(), e.coeffs[c].cols()],
            values: nested(&e.coeffs[c]),
            meta: meta(json!({
                "seed": e.seed,
                "n_samples": e.n_samples,
                "kernel_width": e.kernel_width,
                "intercept": e.intercept[c],
                "fidelity_r2": e.fidelity_r2[c],
                "other_component": nested(&e.coeffs[1 - c]),
            })),
            per_timestep: Some(per_timestep_importance(e)),
        }
    }

    /// Signed map of `component`; the magnitude map rides along in `meta`.
    pub fn from_saliency(e: &SaliencyMap, component: Component) -> Self {
        let m = &e.signed[component.index()];
        Self {
            method: "saliency".into(),
            component: component.name().into(),
            shape: vec![m.rows(), m.cols()],
            values: nested(m),
            meta: meta(json!({
                "magnitude": nested(&e.magnitude),
                "other_component": nested(&e.signed[1 - component.index()]),
            })),
            per_timestep: Some(per_timestep_importance(e)),
        }
    }

    pub fn from_attention(e: &AttentionExplanation) -> Self {
        Self {
            method: "attention".into(),
            component: "both".into(),
            shape: vec![e.weights.len()],
            values: json!(e.weights),
            meta: Map::new(),
            per_timestep: Some(per_timestep_importance(e)),
        }
    }

    pub fn from_pfi(r: &PfiReport) -> Self {
        let means: Vec<f64> = r.features.iter().map(|f| f.mean_importance).collect();
        let features: Vec<&str> = r.features.iter().map(|f| f.feature.name()).collect();
        let stds: Vec<f64> = r.features.iter().map(|f| f.std_importance).collect();
        let repeats: Vec<&Vec<f64>> = r.features.iter().map(|f| &f.repeats).collect();
        Self {
            method: "pfi".into(),
            component: "both".into(),
            shape: vec![means.len()],
            values: json!(means),
            meta: meta(json!({
                "seed": r.seed,
                "metric": r.metric_name.name(),
                "baseline_metric": r.baseline_metric,
                "features": features,
                "std_importance": stds,
                "n_repeats": r.features.first().map_or(0, |f| f.n_repeats),
                "repeats": repeats,
            })),
            per_timestep: None,
        }
    }

    pub fn from_shap(e: &ShapExplanation) -> Self {
        let c = e.component.index();
        Self {
            method: "shap".into(),
            component: e.component.name().into(),
            shape: vec![e.phi[c].rows(), e.phi[c].cols()],
            values: nested(&e.phi[c]),
            meta: meta(json!({
                "seed": e.seed,
                "n_permutations": e.n_permutations,
                "background_size": e.background_size,
                "base_value": e.base_value[c],
                "prediction": e.prediction[c],
                "other_component": nested(&e.phi[1 - c]),
            })),
            per_timestep: Some(per_timestep_importance(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shap_export_layout() {
        let mut phi = Matrix::zeros(3, 4);
        phi.set(1, 2, 0.25);
        let e = ShapExplanation {
            component: Component::Dlat,
            phi: [phi.clone(), Matrix::zeros(3, 4)],
            base_value: [0.1, 0.2],
            prediction: [0.35, 0.2],
            n_permutations: 4,
            background_size: 9,
            seed: 17,
        };
        let x = ExplanationExport::from_shap(&e);
        let text = serde_json::to_string(&x).unwrap();
        let keys = ["method", "component", "shape", "values", "meta", "per_timestep"];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(x.shape, vec![3, 4]);
        assert_eq!(x.meta["seed"], json!(17));
        assert_eq!(x.meta["background_size"], json!(9));
        assert_eq!(x.per_timestep, Some(vec![0.0, 1.0, 0.0]));
        assert_eq!(x.values_matrix().unwrap(), phi);
        let back: ExplanationExport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, x);
    }
}
