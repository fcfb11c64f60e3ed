//! SVG storyboard frames, one per held shot.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::director::{Phase, ShotLogRecord};
use crate::geom::Vec3;
use crate::psl::project;
use crate::shotlog::phase_runs;

/// Billboard width as a fraction of avatar height.
const BILLBOARD_ASPECT: f64 = 0.3;
/// Face point height as a fraction of avatar height.
const FACE_RATIO: f64 = 0.93;

/// A projected avatar rectangle in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Billboard {
    pub id: u32,
    pub center_x: f64,
    pub top: f64,
    pub bottom: f64,
    pub width: f64,
}

/// Projects each recorded subject as a flat, camera-facing rectangle
/// centered on its face point. Subjects behind the camera are dropped.
pub fn billboards(rec: &ShotLogRecord, width: f64, height: f64) -> Vec<Billboard> {
    let pose = rec.pose();
    rec.subjects
        .iter()
        .filter_map(|s| {
            let face = Vec3::from(s.face);
            let h = face.z / FACE_RATIO;
            let feet = face.with_z(0.0);
            let head = face.with_z(h);
            let pf = project(&pose, face, width, height);
            let pb = project(&pose, feet, width, height);
            let ph = project(&pose, head, width, height);
            if pf.depth <= 0.0 || pb.depth <= 0.0 || ph.depth <= 0.0 {
                return None;
            }
            let span = (pb.y - ph.y).abs();
            Some(Billboard {
                id: s.id,
                center_x: pf.x,
                top: ph.y,
                bottom: pb.y,
                width: span * BILLBOARD_ASPECT,
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG for one frame.
pub fn render_frame(rec: &ShotLogRecord, width: f64, height: f64) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#1d2330"/>"##);
    for k in 1..3 {
        let x = width * k as f64 / 3.0;
        let y = height * k as f64 / 3.0;
        let _ = writeln!(
            svg,
            r##"<line class="third" x1="{x:.3}" y1="0" x2="{x:.3}" y2="{height}" stroke="#8a93a6" stroke-dasharray="8 6"/>"##
        );
        let _ = writeln!(
            svg,
            r##"<line class="third" x1="0" y1="{y:.3}" x2="{width}" y2="{y:.3}" stroke="#8a93a6" stroke-dasharray="8 6"/>"##
        );
    }
    for b in billboards(rec, width, height) {
        let _ = writeln!(
            svg,
            r##"<rect class="billboard" data-id="{}" data-cx="{:.3}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#e0b040" fill-opacity="0.8"/>"##,
            b.id,
            b.center_x,
            b.center_x - b.width / 2.0,
            b.top.min(b.bottom),
            b.width,
            (b.bottom - b.top).abs()
        );
    }
    let caption = match (&rec.spec, rec.event_id) {
        (Some(spec), _) => spec.clone(),
        (None, Some(id)) => format!("event {id}: {} overview", rec.mode),
        (None, None) => rec.mode.clone(),
    };
    let _ = writeln!(
        svg,
        r##"<text class="caption" x="24" y="{:.0}" font-family="sans-serif" font-size="32" fill="#f0f0f0">t={:.2}s  {}</text>"##,
        height - 24.0,
        rec.t,
        escape(&caption)
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes `hold_NNN.svg` for the first frame of every Hold run.
pub fn export_storyboard(records: &[ShotLogRecord], out: &Path, width: f64, height: f64) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let holds = phase_runs(records).into_iter().filter(|r| r.phase == Phase::Hold);
    for (k, run) in holds.enumerate() {
        if written.is_empty() {
            std::fs::create_dir_all(out)?;
        }
        let path = out.join(format!("hold_{:03}.svg", k + 1));
        std::fs::write(&path, render_frame(&records[run.first], width, height))?;
        written.push(path);
    }
    Ok(written)
}
