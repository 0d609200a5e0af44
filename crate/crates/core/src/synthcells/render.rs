use serde::{Deserialize, Serialize};

use super::image::Image;
use super::motion::{Cell, CellKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStyle {
    pub radius: f64,
    pub color: [u8; 3],
    pub alpha: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Palette {
    pub background: [u8; 3],
    pub rbc: CellStyle,
    pub wbc: CellStyle,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            background: [235, 205, 205],
            rbc: CellStyle {
                radius: 2.0,
                color: [180, 60, 60],
                alpha: 0.85,
            },
            wbc: CellStyle {
                radius: 4.0,
                color: [225, 215, 235],
                alpha: 0.95,
            },
        }
    }
}

impl Palette {
    pub fn style(&self, kind: CellKind) -> &CellStyle {
        match kind {
            CellKind::Rbc => &self.rbc,
            CellKind::Wbc => &self.wbc,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (name, s) in [("rbc", &self.rbc), ("wbc", &self.wbc)] {
            if !(s.radius.is_finite() && s.radius > 0.0) {
                return Err(crate::Error::InvalidConfig(format!("{name} radius must be > 0")));
            }
            if !(0.0..=1.0).contains(&s.alpha) {
                return Err(crate::Error::InvalidConfig(format!("{name} alpha must be in [0,1]")));
            }
        }
        Ok(())
    }
}

/// Alpha-composite `color` over `dst` in place.
#[inline]
pub(crate) fn blend(dst: f32, color: u8, alpha: f32) -> f32 {
    alpha * f32::from(color) + (1.0 - alpha) * dst
}

/// Render cells as filled discs: all RBCs first, then WBCs on top, each in
/// input order. A pixel belongs to a disc when its centre lies within the
/// cell radius. Cells partly or wholly outside the frame are clipped.
pub fn render_frame(cells: &[Cell], width: usize, height: usize, palette: &Palette) -> Image {
    let plane = width * height;
    let mut canvas = vec![0f32; 3 * plane];
    for c in 0..3 {
        canvas[c * plane..(c + 1) * plane].fill(f32::from(palette.background[c]));
    }
    for kind in [CellKind::Rbc, CellKind::Wbc] {
        let style = palette.style(kind);
        for cell in cells.iter().filter(|c| c.kind == kind) {
            draw_disc(&mut canvas, width, height, cell.position, cell.radius, style);
        }
    }
    Image {
        channels: 3,
        height,
        width,
        data: canvas.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect(),
    }
}

fn draw_disc(canvas: &mut [f32], width: usize, height: usize, center: [f64; 2], radius: f64, style: &CellStyle) {
    let [cx, cy] = center;
    if !(cx.is_finite() && cy.is_finite()) {
        return;
    }
    let r2 = radius * radius;
    let row0 = (cy - radius - 0.5).floor().max(0.0);
    let row1 = (cy + radius - 0.5).ceil().min(height as f64 - 1.0);
    let col0 = (cx - radius - 0.5).floor().max(0.0);
    let col1 = (cx + radius - 0.5).ceil().min(width as f64 - 1.0);
    if row0 > row1 || col0 > col1 {
        return;
    }
    let plane = width * height;
    for row in row0 as usize..=row1 as usize {
        let dy = row as f64 + 0.5 - cy;
        for col in col0 as usize..=col1 as usize {
            let dx = col as f64 + 0.5 - cx;
            if dx * dx + dy * dy <= r2 {
                let idx = row * width + col;
                for c in 0..3 {
                    let v = &mut canvas[c * plane + idx];
                    *v = blend(*v, style.color[c], style.alpha);
                }
            }
        }
    }
}
