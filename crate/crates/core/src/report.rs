//! Result emission: the results CSV, self-contained SVG figures and the
//! provenance record.

use crate::engine::{Ci, Experiment, ExperimentResult};
use crate::scene::Setup;

pub const METRICS: [&str; 6] = [
    "sinr_db",
    "spectral_efficiency_bps_hz",
    "inr_db",
    "access_delay_s",
    "collision_domain_size",
    "radar_success_fraction",
];

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.9}")
    }
}

fn setup_label(s: Setup) -> &'static str {
    match s {
        Setup::Setup1 => "setup1",
        Setup::Setup2 => "setup2",
    }
}

pub fn experiment_label(e: Experiment) -> &'static str {
    match e {
        Experiment::Fig4 => "fig4",
        Experiment::Fig5 => "fig5",
        Experiment::Single => "single",
    }
}

/// Long-format CSV: one row per (sweep point, metric). Column order and
/// headers are stable across runs and schemes.
pub fn results_csv(experiment: Experiment, result: &ExperimentResult) -> String {
    let mut out = String::from(
        "experiment,scheme,setup,sweep_m,metric,mean,ci_low,ci_high,replications\n",
    );
    for p in &result.points {
        let cells: [(&str, Ci); 6] = [
            (METRICS[0], p.sinr_db),
            (METRICS[1], p.spectral_efficiency),
            (METRICS[2], p.inr_db),
            (METRICS[3], p.access_delay_s),
            (METRICS[4], p.collision_domain_size),
            (METRICS[5], p.radar_success_fraction),
        ];
        for (name, ci) in cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                experiment_label(experiment),
                p.scheme.label(),
                setup_label(p.setup),
                fmt(p.sweep_m),
                name,
                fmt(ci.mean),
                fmt(ci.lo),
                fmt(ci.hi),
                p.replications,
            ));
        }
    }
    out
}

struct Series<'a> {
    label: String,
    color: &'a str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn scheme_color(label: &str) -> &'static str {
    match label {
        "tdma" => "#1f77b4",
        "ra_csma" => "#d62728",
        "adaptive" => "#2ca02c",
        _ => "#7f7f7f",
    }
}

/// Spectral efficiency vs. tagged-link distance, one series per scheme.
pub fn fig4_svg(result: &ExperimentResult) -> String {
    let mut series = Vec::new();
    for p in &result.points {
        let label = p.scheme.label().to_string();
        if !series.iter().any(|s: &Series| s.label == label) {
            series.push(Series {
                label: label.clone(),
                color: scheme_color(p.scheme.label()),
                dashed: false,
                points: Vec::new(),
            });
        }
        let s = series.iter_mut().find(|s| s.label == label).unwrap();
        if p.spectral_efficiency.mean.is_finite() {
            s.points.push((p.sweep_m, p.spectral_efficiency.mean));
        }
    }
    render_svg(
        "Spectral efficiency of the V2V link vs. link distance",
        "Distance between the connected vehicles, m",
        "Spectral efficiency, bit/s/Hz",
        true,
        &series,
    )
}

/// Mean SINR vs. mean inter-vehicle gap; solid lines for the random-gap
/// setup, dashed for the constant-gap setup.
pub fn fig5_svg(result: &ExperimentResult) -> String {
    let mut series: Vec<Series> = Vec::new();
    for p in &result.points {
        let label = format!("{} {}", p.scheme.label(), setup_label(p.setup));
        if !series.iter().any(|s| s.label == label) {
            series.push(Series {
                label: label.clone(),
                color: scheme_color(p.scheme.label()),
                dashed: p.setup == Setup::Setup2,
                points: Vec::new(),
            });
        }
        let s = series.iter_mut().find(|s| s.label == label).unwrap();
        if p.sinr_db.mean.is_finite() {
            s.points.push((p.sweep_m, p.sinr_db.mean));
        }
    }
    render_svg(
        "Mean SINR at the tagged receiver vs. mean inter-vehicle distance",
        "Mean inter-vehicle distance, m",
        "SINR, dB",
        true,
        &series,
    )
}

fn render_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    log_x: bool,
    series: &[Series],
) -> String {
    let (w, h) = (820.0, 560.0);
    let (ml, mr, mt, mb) = (70.0, 170.0, 50.0, 60.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .collect();
    let (x_min, x_max) = bounds(&xs, log_x);
    let (mut y_min, mut y_max) = bounds(&ys, false);
    if (y_max - y_min).abs() < 1e-9 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let x_pos = |x: f64| -> f64 {
        let t = if log_x {
            (x.log10() - x_min.log10()) / (x_max.log10() - x_min.log10())
        } else {
            (x - x_min) / (x_max - x_min)
        };
        ml + t * pw
    };
    let y_pos = |y: f64| -> f64 { mt + (1.0 - (y - y_min) / (y_max - y_min)) * ph };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"Helvetica, Arial, sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        title
    ));
    // Frame.
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\"/>\n"
    ));
    // X ticks.
    let x_ticks: Vec<f64> = if log_x {
        let mut t = Vec::new();
        let mut d = 10f64.powf(x_min.log10().floor());
        while d <= x_max * 1.0001 {
            for m in [1.0, 2.0, 5.0] {
                let v = d * m;
                if v >= x_min * 0.9999 && v <= x_max * 1.0001 {
                    t.push(v);
                }
            }
            d *= 10.0;
        }
        t
    } else {
        (0..=5).map(|i| x_min + (x_max - x_min) * i as f64 / 5.0).collect()
    };
    for t in &x_ticks {
        let x = x_pos(*t);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#999\" stroke-dasharray=\"2,4\"/>\n",
            mt, mt + ph
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            mt + ph + 16.0,
            trim_num(*t)
        ));
    }
    for i in 0..=5 {
        let v = y_min + (y_max - y_min) * i as f64 / 5.0;
        let y = y_pos(v);
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#999\" stroke-dasharray=\"2,4\"/>\n",
            ml + pw
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            ml - 6.0,
            y + 4.0,
            trim_num(v)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        h - 16.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0,
        y_label
    ));
    // Series.
    for s in series {
        if s.points.is_empty() {
            continue;
        }
        let mut pts = s.points.clone();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let d: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", x_pos(*x), y_pos(*y)))
            .collect();
        let dash = if s.dashed { " stroke-dasharray=\"7,4\"" } else { "" };
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{} points=\"{}\"/>\n",
            s.color,
            dash,
            d.join(" ")
        ));
        for (x, y) in &pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
                x_pos(*x),
                y_pos(*y),
                s.color
            ));
        }
    }
    // Legend.
    let mut ly = mt + 10.0;
    for s in series {
        let lx = ml + pw + 12.0;
        let dash = if s.dashed { " stroke-dasharray=\"7,4\"" } else { "" };
        svg.push_str(&format!(
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
            lx + 26.0,
            s.color,
            dash
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            lx + 32.0,
            ly + 4.0,
            s.label
        ));
        ly += 18.0;
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(vals: &[f64], log: bool) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        if v.is_finite() && (!log || v > 0.0) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        (if log { 0.1 } else { 0.0 }, 1.0)
    } else {
        (lo, hi)
    }
}

fn trim_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        let s = format!("{v:.1}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2}")
    }
}

/// Provenance record: a run is reproducible from this file alone.
pub fn provenance(config_toml: &str, master_seed: u64, experiment: Experiment, jobs: usize) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(config_toml.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!(
        "tool: canyonsim {}\nexperiment: {}\nmaster_seed: {}\njobs: {}\nconfig_sha256: {}\n\n--- config ---\n{}",
        env!("CARGO_PKG_VERSION"),
        experiment_label(experiment),
        master_seed,
        jobs,
        hex,
        config_toml
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::AggregatePoint;
    use crate::mac::Scheme;

    fn point(scheme: Scheme, setup: Setup, sweep: f64) -> AggregatePoint {
        let c = Ci { mean: 1.0, lo: 0.5, hi: 1.5 };
        AggregatePoint {
            scheme,
            setup,
            sweep_m: sweep,
            replications: 3,
            sinr_db: c,
            spectral_efficiency: c,
            inr_db: c,
            access_delay_s: c,
            collision_domain_size: c,
            radar_success_fraction: c,
        }
    }

    #[test]
    fn csv_shape_and_stability() {
        let result = ExperimentResult {
            points: vec![
                point(Scheme::Tdma, Setup::Setup1, 1.0),
                point(Scheme::RaCsma, Setup::Setup1, 1.0),
            ],
            records: Vec::new(),
        };
        let a = results_csv(Experiment::Fig5, &result);
        let b = results_csv(Experiment::Fig5, &result);
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], "experiment,scheme,setup,sweep_m,metric,mean,ci_low,ci_high,replications");
        // 2 points x 6 metrics.
        assert_eq!(lines.len(), 1 + 12);
        assert!(lines[1].starts_with("fig5,tdma,setup1,1.000000000,sinr_db,"));
    }

    #[test]
    fn svg_is_self_contained() {
        let result = ExperimentResult {
            points: vec![
                point(Scheme::Tdma, Setup::Setup1, 1.0),
                point(Scheme::Tdma, Setup::Setup1, 10.0),
            ],
            records: Vec::new(),
        };
        let svg = fig4_svg(&result);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
