//! SVG rendering of 2D couplings and sampled trajectories.
//!
//! Layers, back to front: interpolation chords of the coupling, source
//! points, target points, then the sampled paths as polylines. Path color
//! encodes the velocity scale `h`; velocity-only (rectified) runs draw in
//! gray.

use caf_core::data::Coupling;
use caf_core::sample::TrajectoryLog;

use crate::CliError;

const CANVAS: f64 = 640.0;
const MARGIN: f64 = 32.0;

/// Fixed palette over the `h` sweep; values off the grid fall back to the
/// last stop.
fn h_color(h: Option<f64>) -> &'static str {
    let Some(h) = h else {
        return "#888888";
    };
    const STOPS: [(f64, &str); 4] = [
        (0.5, "#1f77b4"),
        (1.0, "#2ca02c"),
        (1.5, "#ff7f0e"),
        (2.0, "#d62728"),
    ];
    for (stop, color) in STOPS {
        if (h - stop).abs() < 1e-9 {
            return color;
        }
    }
    "#9467bd"
}

struct Frame {
    min: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        let mut any = false;
        for p in points {
            any = true;
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        if !any {
            min = [-1.0, -1.0];
            max = [1.0, 1.0];
        }
        let span = (max[0] - min[0]).max(max[1] - min[1]).max(1e-9);
        Frame {
            min,
            scale: (CANVAS - 2.0 * MARGIN) / span,
        }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.min[0]) * self.scale
    }

    /// SVG y grows downward.
    fn y(&self, v: f64) -> f64 {
        CANVAS - MARGIN - (v - self.min[1]) * self.scale
    }
}

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

/// Renders coupling scatter plus trajectory polylines. All data must be 2D.
pub fn plot_trajectories(logs: &[TrajectoryLog], coupling: &Coupling) -> Result<String, CliError> {
    if coupling.dim() != 2 {
        return Err(CliError::Plot(format!(
            "plots are 2D only, coupling has dim {}",
            coupling.dim()
        )));
    }
    for log in logs {
        if log.points.iter().any(|p| p.len() != 2) {
            return Err(CliError::Plot("plots are 2D only, trajectory has other dim".into()));
        }
    }

    let frame = Frame::fit(
        coupling
            .pairs()
            .iter()
            .flat_map(|(x0, x1)| [[x0[0], x0[1]], [x1[0], x1[1]]])
            .chain(
                logs.iter()
                    .flat_map(|l| l.points.iter().map(|p| [p[0], p[1]])),
            ),
    );

    let mut svg = String::with_capacity(4096);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{CANVAS}\" height=\"{CANVAS}\" viewBox=\"0 0 {CANVAS} {CANVAS}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    svg.push_str("<g stroke=\"#dddddd\" stroke-width=\"0.6\">\n");
    for (x0, x1) in coupling.pairs() {
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>\n",
            fmt(frame.x(x0[0])),
            fmt(frame.y(x0[1])),
            fmt(frame.x(x1[0])),
            fmt(frame.y(x1[1]))
        ));
    }
    svg.push_str("</g>\n");

    svg.push_str("<g fill=\"#a6bddb\">\n");
    for (x0, _) in coupling.pairs() {
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"2\"/>\n",
            fmt(frame.x(x0[0])),
            fmt(frame.y(x0[1]))
        ));
    }
    svg.push_str("</g>\n");

    svg.push_str("<g fill=\"#2b2b2b\">\n");
    for (_, x1) in coupling.pairs() {
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"2\"/>\n",
            fmt(frame.x(x1[0])),
            fmt(frame.y(x1[1]))
        ));
    }
    svg.push_str("</g>\n");

    for log in logs {
        let points: Vec<String> = log
            .points
            .iter()
            .map(|p| format!("{},{}", fmt(frame.x(p[0])), fmt(frame.y(p[1]))))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" stroke-opacity=\"0.7\" points=\"{}\"/>\n",
            h_color(log.meta.h),
            points.join(" ")
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use caf_core::sample::{sample_caf, ExactPairField};
    use caf_core::crossing_fixture;

    #[test]
    fn empty_log_list_still_renders_scatter() {
        let svg = plot_trajectories(&[], &crossing_fixture()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("circle"));
        assert!(!svg.contains("polyline"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn exact_fixture_paths_render_as_straight_polylines() {
        let fixture = crossing_fixture();
        let mut logs = Vec::new();
        for (x0, x1) in fixture.pairs() {
            let oracle = ExactPairField::new(x0, x1, 2.0).unwrap();
            let (_, mut log) = sample_caf(x0, &oracle, &oracle, 8).unwrap();
            log.meta.h = Some(2.0);
            logs.push(log);
        }
        let svg = plot_trajectories(&logs, &fixture).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("#d62728")); // h = 2 color
    }

    #[test]
    fn non_2d_coupling_is_rejected() {
        let coupling = caf_core::Coupling::new(
            vec![(vec![0.0; 3], vec![1.0; 3])],
            caf_core::CouplingMode::Stochastic,
            "",
        )
        .unwrap();
        assert!(plot_trajectories(&[], &coupling).is_err());
    }

    #[test]
    fn thousand_paths_stay_under_the_size_budget() {
        let fixture = crossing_fixture();
        let (x0, x1) = &fixture.pairs()[0];
        let oracle = ExactPairField::new(x0, x1, 1.5).unwrap();
        let (_, log) = sample_caf(x0, &oracle, &oracle, 50).unwrap();
        let logs: Vec<_> = (0..1000).map(|_| log.clone()).collect();
        let svg = plot_trajectories(&logs, &fixture).unwrap();
        assert!(svg.len() < 5 * 1024 * 1024, "svg is {} bytes", svg.len());
        // Well-formed XML: one root element, balanced tags by construction.
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
