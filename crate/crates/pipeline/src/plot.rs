//! Static SVG plots of the analytics outputs: semantic-space scatter
//! by domain, degree spectrum on log-log axes with the fitted line, and
//! the difficulty histogram.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::analytics::{DifficultyHistogram, PowerLawSummary};
use crate::error::{Error, Result};

fn draw_error(e: impl std::fmt::Display) -> Error {
    Error::data(format!("plot: {e}"))
}

/// Scatter of projected records, one color per domain.
pub fn plot_projection(points: &[(f64, f64, String)], path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(Error::data("nothing to plot: no projected points"));
    }
    let (mut x_min, mut x_max, mut y_min, mut y_max) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y, _) in points {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-9);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x_min, x_max) = pad(x_min, x_max);
    let (y_min, y_max) = pad(y_min, y_max);

    let mut domains: Vec<&str> = points.iter().map(|(_, _, d)| d.as_str()).collect();
    domains.sort_unstable();
    domains.dedup();

    let root = SVGBackend::new(path, (900, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Semantic space by domain", ("sans-serif", 24))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x_min..x_max, y_min..y_max)
        .map_err(draw_error)?;
    chart.configure_mesh().draw().map_err(draw_error)?;

    for (i, domain) in domains.iter().enumerate() {
        let color = Palette99::pick(i).mix(0.85);
        chart
            .draw_series(
                points
                    .iter()
                    .filter(|(_, _, d)| d == domain)
                    .map(|(x, y, _)| Circle::new((*x, *y), 3, color.filled())),
            )
            .map_err(draw_error)?
            .label(domain.to_string())
            .legend(move |(x, y)| Circle::new((x + 8, y), 4, Palette99::pick(i).filled()));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(draw_error)?;
    root.present().map_err(draw_error)?;
    Ok(())
}

/// Degree spectrum on log-log axes, with the fitted power law drawn
/// through it when available.
pub fn plot_degree_spectrum(
    spectrum: &BTreeMap<usize, u64>,
    fit: Option<&PowerLawSummary>,
    path: &Path,
) -> Result<()> {
    let points: Vec<(f64, f64)> = spectrum
        .iter()
        .filter(|(d, f)| **d >= 1 && **f > 0)
        .map(|(d, f)| (*d as f64, *f as f64))
        .collect();
    if points.is_empty() {
        return Err(Error::data("nothing to plot: empty degree spectrum"));
    }
    let x_max = points.iter().map(|(x, _)| *x).fold(1.0, f64::max) * 1.5;
    let y_max = points.iter().map(|(_, y)| *y).fold(1.0, f64::max) * 1.5;

    let root = SVGBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_error)?;
    let caption = match fit {
        Some(f) => format!(
            "Tag connectivity: Freq(d) ~ d^(-{:.2}), R^2 = {:.3}",
            f.gamma, f.r_squared
        ),
        None => "Tag connectivity degree spectrum".to_string(),
    };
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d((0.9..x_max).log_scale(), (0.9..y_max).log_scale())
        .map_err(draw_error)?;
    chart
        .configure_mesh()
        .x_desc("degree d")
        .y_desc("Freq(d)")
        .draw()
        .map_err(draw_error)?;

    chart
        .draw_series(
            points
                .iter()
                .map(|(x, y)| Circle::new((*x, *y), 4, BLUE.filled())),
        )
        .map_err(draw_error)?
        .label("observed")
        .legend(|(x, y)| Circle::new((x + 8, y), 4, BLUE.filled()));

    if let Some(f) = fit {
        let gamma = f.gamma;
        let intercept = f.ln_intercept;
        let line: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let ln_d = (points[0].0.ln())
                    + (points.last().unwrap().0.ln() - points[0].0.ln()) * i as f64 / 100.0;
                (ln_d.exp(), (intercept - gamma * ln_d).exp())
            })
            .collect();
        chart
            .draw_series(LineSeries::new(line, RED.stroke_width(2)))
            .map_err(draw_error)?
            .label("least-squares fit")
            .legend(|(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], RED.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(draw_error)?;
    root.present().map_err(draw_error)?;
    Ok(())
}

/// Bar chart of the difficulty score distribution.
pub fn plot_difficulty(histogram: &DifficultyHistogram, path: &Path) -> Result<()> {
    let y_max = histogram.counts.iter().copied().max().unwrap_or(0).max(1) as f64 * 1.2;
    let root = SVGBackend::new(path, (700, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_error)?;
    let caption = match histogram.mean {
        Some(mean) => format!("Difficulty distribution (mean {mean:.2})"),
        None => "Difficulty distribution (no scored records)".to_string(),
    };
    let labels = ["very easy", "easy", "medium", "hard", "very hard"];
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d((0usize..5usize).into_segmented(), 0.0..y_max)
        .map_err(draw_error)?;
    chart
        .configure_mesh()
        .x_label_formatter(&|v| match v {
            SegmentValue::CenterOf(i) | SegmentValue::Exact(i) => {
                labels.get(*i).unwrap_or(&"").to_string()
            }
            _ => String::new(),
        })
        .y_desc("records")
        .draw()
        .map_err(draw_error)?;
    chart
        .draw_series((0..5).map(|i| {
            let mut bar = Rectangle::new(
                [
                    (SegmentValue::Exact(i), 0.0),
                    (SegmentValue::Exact(i + 1), histogram.counts[i] as f64),
                ],
                Palette99::pick(i).mix(0.8).filled(),
            );
            bar.set_margin(0, 0, 8, 8);
            bar
        }))
        .map_err(draw_error)?;
    root.present().map_err(draw_error)?;
    Ok(())
}

/// Read back the projection CSV written by the analyze stage.
pub fn load_projection_csv(path: &Path) -> Result<Vec<(f64, f64, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data_at(path, format!("cannot read projection: {e}")))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 4 {
            return Err(Error::data_at(path, format!("line {}: bad field count", idx + 1)));
        }
        let x: f64 = fields[1]
            .parse()
            .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?;
        let y: f64 = fields[2]
            .parse()
            .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?;
        out.push((x, y, fields[3].clone()));
    }
    Ok(out)
}

/// Read back the degree-spectrum CSV written by the analyze stage.
pub fn load_spectrum_csv(path: &Path) -> Result<BTreeMap<usize, u64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data_at(path, format!("cannot read spectrum: {e}")))?;
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (d, f) = line
            .split_once(',')
            .ok_or_else(|| Error::data_at(path, format!("line {}: missing comma", idx + 1)))?;
        let d: usize = d
            .trim()
            .parse()
            .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?;
        let f: u64 = f
            .trim()
            .parse()
            .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?;
        out.insert(d, f);
    }
    Ok(out)
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes && chars.peek() == Some(&'"') => {
                field.push('"');
                chars.next();
            }
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut field));
            }
            _ => field.push(c),
        }
    }
    fields.push(field);
    fields
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_plot_writes_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("projection.svg");
        let points = vec![
            (0.0, 0.0, "Math".to_string()),
            (1.0, 1.0, "Math".to_string()),
            (2.0, -1.0, "Coding".to_string()),
        ];
        plot_projection(&points, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.contains("<svg"));
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn spectrum_plot_handles_fit_and_no_fit() {
        let dir = tempfile::tempdir().unwrap();
        let spectrum: BTreeMap<usize, u64> = [(1, 100), (2, 25), (4, 6)].into_iter().collect();
        let fit = PowerLawSummary {
            gamma: 2.0,
            r_squared: 0.99,
            points_used: 3,
            ln_intercept: (100.0f64).ln(),
        };
        plot_degree_spectrum(&spectrum, Some(&fit), &dir.path().join("with_fit.svg")).unwrap();
        plot_degree_spectrum(&spectrum, None, &dir.path().join("no_fit.svg")).unwrap();
        assert!(dir.path().join("with_fit.svg").exists());
        assert!(dir.path().join("no_fit.svg").exists());
    }

    #[test]
    fn difficulty_plot_writes_svg() {
        let dir = tempfile::tempdir().unwrap();
        let h = DifficultyHistogram {
            counts: [1, 5, 9, 4, 2],
            mean: Some(2.05),
            unscored: 0,
        };
        plot_difficulty(&h, &dir.path().join("difficulty.svg")).unwrap();
    }

    #[test]
    fn projection_csv_round_trips_including_quoted_domains() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("projection.csv");
        std::fs::write(
            &path,
            "id,x,y,domain\nr1,0.5,-1.25,Math\nr2,2,3,\"Logic, formal\"\n",
        )
        .unwrap();
        let points = load_projection_csv(&path).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[1].2, "Logic, formal");
        assert_eq!(points[0].0, 0.5);
    }

    #[test]
    fn spectrum_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectrum.csv");
        std::fs::write(&path, "degree,frequency\n1,10\n3,2\n").unwrap();
        let spectrum = load_spectrum_csv(&path).unwrap();
        assert_eq!(spectrum, [(1usize, 10u64), (3, 2)].into_iter().collect());
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(plot_projection(&[], &dir.path().join("x.svg")).is_err());
        assert!(
            plot_degree_spectrum(&BTreeMap::new(), None, &dir.path().join("y.svg")).is_err()
        );
    }
}
