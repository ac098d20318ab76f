use trajxai_core::explainers::{
    agreement, explain_attention, explain_lime, explain_saliency, explain_shap_sampling,
    per_timestep_importance, select_background, ExplanationExport,
};
use trajxai_core::forecaster::{forward, init_model, load_checkpoint, save_checkpoint, train};
use trajxai_core::render::{export_geojson, render_importance_trajectory, render_overlay};
use trajxai_core::trajectory::{
    build_dataset, parse_ais_csv, reconstruct_position, synth_fleet, write_ais_csv, CsvSchema,
    SplitName, SynthKind, SynthParams,
};
use trajxai_core::{Component, ModelConfig, RenderSpec};

#[test]
fn csv_to_explanations() {
    let params = SynthParams {
        position_noise: 2e-4,
        ..SynthParams::default()
    };
    let fleet = synth_fleet(SynthKind::Arc, &params, 12, 18, 60.0, 7).unwrap();
    let mut csv = Vec::new();
    write_ais_csv(&mut csv, &fleet).unwrap();
    let trajs = parse_ais_csv(csv.as_slice(), &CsvSchema::default()).unwrap();
    assert_eq!(trajs.len(), fleet.len());

    let ds = build_dataset(&trajs, 5, [0.6, 0.2, 0.2], 7).unwrap();
    let cfg = ModelConfig {
        window: 5,
        hidden: 6,
        attn_dim: 4,
        epochs: 2,
        seed: 7,
        ..ModelConfig::default()
    };
    let (model, report) = train(&init_model(&cfg).unwrap(), &ds, &cfg).unwrap();
    assert_eq!(report.epoch_losses.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&model, &path).unwrap();
    let model = load_checkpoint(&path).unwrap();

    let test = ds.split_samples(SplitName::Test);
    let sample = test[0];
    let pred = forward(&model, &sample.inputs, false).unwrap();
    let at = reconstruct_position(&sample.anchor, pred.delta, Some(sample.horizon())).unwrap();
    assert!(at.lon.is_finite() && at.lat.is_finite());

    let x = model.standardize(&sample.inputs).unwrap();
    let bg = select_background(&ds.split_samples(SplitName::Train), 10, &model.standardization, 1).unwrap();
    let shap = explain_shap_sampling(&model, &x, &bg, Component::Dlat, 3, 1).unwrap();
    let lime = explain_lime(&model, &x, Component::Dlat, 200, None, 1).unwrap();
    let sal = explain_saliency(&model, &x).unwrap();
    let att = explain_attention(&model, &x).unwrap();

    let vectors = vec![
        ("attention".to_string(), per_timestep_importance(&att)),
        ("saliency".to_string(), per_timestep_importance(&sal)),
        ("lime".to_string(), per_timestep_importance(&lime)),
        ("shap".to_string(), per_timestep_importance(&shap)),
    ];
    let m = agreement(&vectors).unwrap();
    for i in 0..4 {
        assert_eq!(m.rho.get(i, i), 1.0);
        for j in 0..4 {
            assert_eq!(m.rho.get(i, j), m.rho.get(j, i));
            assert!(m.rho.get(i, j).abs() <= 1.0);
        }
    }

    let export = ExplanationExport::from_shap(&shap);
    let text = serde_json::to_string(&export).unwrap();
    let back: ExplanationExport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.values_matrix().unwrap(), shap.phi[0]);

    let spec = RenderSpec::default();
    let window = sample.window_points();
    let svg = render_importance_trajectory(&window, &vectors[3].1, "SHAP", &spec).unwrap();
    assert!(roxmltree::Document::parse(&svg).is_ok());
    let overlay = render_overlay(&window, &[sample.anchor, at], &spec).unwrap();
    assert!(roxmltree::Document::parse(&overlay).is_ok());
    let geo = export_geojson(&window, Some(&vectors[3].1), Some(&[sample.anchor, at])).unwrap();
    assert_eq!(geo["type"], "FeatureCollection");
}
