//! Sweep-level properties of the presets at their default size.

use ngain_core::{preset, run_sweep, summarize_figure_tables, NoiseDraws};

#[test]
fn main_preset_figure_tables() {
    let sweep = run_sweep(&preset("main").unwrap()).unwrap();
    let tables = summarize_figure_tables(&sweep);
    let c1 = sweep.cell(1.0).unwrap();
    let combined = (c1.se_fbar.powi(2) + c1.se_fhat.powi(2)).sqrt();
    assert!((c1.mean_fbar - c1.mean_fhat).abs() < 3.0 * combined);
    for row in &tables.panel_b {
        assert!(row.bias_fhat.abs() < 3.0 * row.se_fhat, "{row:?}");
    }
    for row in &tables.panel_c {
        assert!((row.mean_fhat - 0.4).abs() < 0.01);
        assert!(row.mean_fbar <= row.mean_fhat + 3.0 * row.se_fbar);
    }
    let fbar: Vec<f64> = sweep.aggregates.iter().map(|a| a.mean_fbar).collect();
    assert!(fbar.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn low_pretest_presets_track_fhat_closely() {
    let main = run_sweep(&preset("main").unwrap()).unwrap();
    for name in ["app2", "app3"] {
        let other = run_sweep(&preset(name).unwrap()).unwrap();
        for (a, b) in other.aggregates.iter().zip(&main.aggregates) {
            assert!(
                a.corr_fbar_fhat.unwrap() > b.corr_fbar_fhat.unwrap(),
                "{name} at {}",
                a.reliability
            );
        }
    }
}

#[test]
fn fresh_noise_draws_keep_the_bias_direction() {
    let mut spec = preset("main").unwrap();
    spec.noise_draws = NoiseDraws::Fresh;
    spec.reliability_grid = vec![0.7, 0.85, 1.0];
    let sweep = run_sweep(&spec).unwrap();
    let a = &sweep.aggregates;
    assert!(a[0].noise_bias_fbar < -3.0 * a[0].se_noise_bias_fbar);
    assert!(a[0].noise_bias_fbar < a[1].noise_bias_fbar);
    assert_eq!(a[2].noise_bias_fbar, 0.0);
    assert!(a[0].mean_r < a[2].mean_r);
}
