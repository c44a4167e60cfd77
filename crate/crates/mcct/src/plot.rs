//! Speed and gap profiles of a run: speed of every vehicle over time on top,
//! gap to the predecessor below, with the perturbation window shaded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use mcct_core::message::EntityId;
use mcct_core::telemetry::TelemetryRecord;
use plotters::coord::Shift;
use plotters::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("telemetry has no rows")]
    Empty,
    #[error("drawing failed: {0}")]
    Draw(String),
    #[error("no TrueType font found for bitmap output; set MCCT_FONT to a .ttf file")]
    NoFont,
}

fn draw_err<E: std::fmt::Display>(e: E) -> PlotError {
    PlotError::Draw(e.to_string())
}

pub const SIZE: (u32, u32) = (1200, 800);

const FONT_CANDIDATES: &[&str] = &[
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/truetype/liberation/LiberationSans-Regular.ttf",
    "/usr/share/fonts/liberation-sans/LiberationSans-Regular.ttf",
    "/Library/Fonts/Arial.ttf",
    "/System/Library/Fonts/Supplemental/Arial.ttf",
    "C:\\Windows\\Fonts\\arial.ttf",
];

/// Registers a system font as "sans-serif" once per process. Bitmap text
/// needs glyphs; SVG leaves text to the viewer.
fn ensure_font() -> bool {
    static LOADED: OnceLock<bool> = OnceLock::new();
    *LOADED.get_or_init(|| {
        let env = std::env::var_os("MCCT_FONT").map(PathBuf::from);
        let candidates = env.into_iter().chain(FONT_CANDIDATES.iter().map(PathBuf::from));
        for path in candidates {
            let Ok(bytes) = std::fs::read(&path) else { continue };
            let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
            if plotters::style::register_font("sans-serif", FontStyle::Normal, bytes).is_ok() {
                return true;
            }
        }
        false
    })
}

type Series = BTreeMap<EntityId, Vec<(f64, f64)>>;

struct Profiles {
    order: Vec<EntityId>,
    speed: Series,
    gap: Series,
    t_end: f64,
    window: Option<(f64, f64)>,
}

fn profiles(record: &TelemetryRecord) -> Result<Profiles, PlotError> {
    if record.rows.is_empty() {
        return Err(PlotError::Empty);
    }
    let order = match &record.header {
        Some(h) => h.vehicles.iter().map(|v| v.id.clone()).collect(),
        None => {
            let mut ids: Vec<EntityId> = record.rows.iter().map(|r| r.id.clone()).collect();
            ids.sort();
            ids.dedup();
            ids
        }
    };
    let mut speed = Series::new();
    let mut gap = Series::new();
    for r in &record.rows {
        speed.entry(r.id.clone()).or_default().push((r.t, r.v));
        if let Some(g) = r.gap_to_leader {
            gap.entry(r.id.clone()).or_default().push((r.t, g));
        }
    }
    let t_end = record.rows.last().map_or(0.0, |r| r.t);
    let window = record.head_perturbation().map(|(t0, dur, _)| (t0, t0 + dur));
    Ok(Profiles {
        order,
        speed,
        gap,
        t_end,
        window,
    })
}

fn bounds(series: &Series) -> (f64, f64) {
    let (lo, hi) = series
        .values()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(0.1);
    (lo - pad, hi + pad)
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, Shift>,
    p: &Profiles,
    series: &Series,
    caption: &str,
    y_label: &str,
) -> Result<(), PlotError>
where
    DB::ErrorType: 'static,
{
    let (y0, y1) = bounds(series);
    let mut chart = ChartBuilder::on(area)
        .caption(caption, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..p.t_end.max(1e-3), y0..y1)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_desc(y_label)
        .draw()
        .map_err(draw_err)?;
    if let Some((a, b)) = p.window {
        chart
            .draw_series(std::iter::once(Rectangle::new([(a, y0), (b, y1)], RGBColor(230, 230, 230).filled())))
            .map_err(draw_err)?;
    }
    for (i, id) in p.order.iter().enumerate() {
        let Some(points) = series.get(id) else { continue };
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
            .map_err(draw_err)?
            .label(id.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    Ok(())
}

fn render<DB: DrawingBackend>(root: DrawingArea<DB, Shift>, record: &TelemetryRecord) -> Result<(), PlotError>
where
    DB::ErrorType: 'static,
{
    let p = profiles(record)?;
    root.fill(&WHITE).map_err(draw_err)?;
    let (top, bottom) = root.split_vertically(SIZE.1 / 2);
    panel(&top, &p, &p.speed, "Speed profiles", "speed [m/s]")?;
    panel(&bottom, &p, &p.gap, "Gap to predecessor", "gap [m]")?;
    root.present().map_err(draw_err)?;
    Ok(())
}

pub fn render_svg(record: &TelemetryRecord) -> Result<String, PlotError> {
    ensure_font();
    let mut out = String::new();
    render(SVGBackend::with_string(&mut out, SIZE).into_drawing_area(), record)?;
    Ok(out)
}

pub fn write_svg(record: &TelemetryRecord, path: &Path) -> Result<(), PlotError> {
    ensure_font();
    render(SVGBackend::new(path, SIZE).into_drawing_area(), record)
}

pub fn write_png(record: &TelemetryRecord, path: &Path) -> Result<(), PlotError> {
    if !ensure_font() {
        return Err(PlotError::NoFont);
    }
    render(BitMapBackend::new(path, SIZE).into_drawing_area(), record)
}

/// Writes `out` in the format its extension names, or both `out.svg` and
/// `out.png` when it has neither extension. Returns the files written.
pub fn write_plots(record: &TelemetryRecord, out: &Path) -> Result<Vec<PathBuf>, PlotError> {
    match out.extension().and_then(|e| e.to_str()) {
        Some("svg") => write_svg(record, out).map(|_| vec![out.to_owned()]),
        Some("png") => write_png(record, out).map(|_| vec![out.to_owned()]),
        _ => {
            let svg = out.with_extension("svg");
            let png = out.with_extension("png");
            write_svg(record, &svg)?;
            write_png(record, &png)?;
            Ok(vec![svg, png])
        }
    }
}
