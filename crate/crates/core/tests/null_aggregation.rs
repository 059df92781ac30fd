//! On data without any signal, aggregated e-value selection should almost
//! never select anything and the e-values should average at most one.

use zipgsk::pipeline::{run, PipelineConfig};
use zipgsk::simgen::{gen_multisource, SimConfig};

#[test]
fn aggregated_selection_on_global_null() {
    let seeds = 100u64;
    let mut any_selected = 0usize;
    let mut e_sum = 0.0;
    let mut e_count = 0usize;
    for s in 0..seeds {
        let sim = SimConfig { n: 120, p: 30, delta_pi: 0.0, seed: 7000 + s, ..Default::default() };
        let data = gen_multisource(&sim).unwrap();
        let cfg = PipelineConfig { b_runs: 5, alpha_kn: Some(0.1), seed: s, ..Default::default() };
        let out = run(&data.sources, &cfg).unwrap();
        // Every selection is false here, so FDP is 1 whenever anything is selected.
        any_selected += usize::from(!out.selection.selected.is_empty());
        let e = out.evalues.expect("aggregated run returns e-values").e;
        e_sum += e.iter().sum::<f64>();
        e_count += e.len();
    }
    let fdr = any_selected as f64 / seeds as f64;
    let mean_e = e_sum / e_count as f64;
    assert!(fdr <= 0.25, "empirical FDR {fdr}");
    assert!(mean_e <= 1.1, "mean e-value {mean_e}");
}
