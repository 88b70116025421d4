//! Spatial grounding grid.
//!
//! Pixel space has its origin at the top-left with y growing downward; grid
//! space has its origin at the bottom-left with y growing upward, in cell
//! units quantized to half steps. Non-square images get rectangular cells.

use thiserror::Error;

use crate::intent::{snap_half, GridCoord, RoiBBox, GRID_CELLS};
use crate::raster::{blend_over, PixelRect, Raster, Rgba, BLACK};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GridError {
    #[error("image is {actual_width}x{actual_height}, grid spec expects {expected_width}x{expected_height}")]
    DimensionMismatch {
        expected_width: u32,
        expected_height: u32,
        actual_width: u32,
        actual_height: u32,
    },
    #[error("pixel ({px}, {py}) lies outside the {width}x{height} image")]
    OutOfImage {
        px: f64,
        py: f64,
        width: u32,
        height: u32,
    },
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub cells_x: u32,
    pub cells_y: u32,
    pub image_width: u32,
    pub image_height: u32,
}

impl GridSpec {
    /// 30x30 cells over an image of the given size.
    pub fn for_image(image_width: u32, image_height: u32) -> Result<Self, GridError> {
        Self::new(GRID_CELLS, GRID_CELLS, image_width, image_height)
    }

    pub fn new(
        cells_x: u32,
        cells_y: u32,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, GridError> {
        if cells_x == 0 || cells_y == 0 || cells_x > GRID_CELLS || cells_y > GRID_CELLS {
            return Err(GridError::InvalidSpec(format!(
                "cell counts must lie in 1..={GRID_CELLS}, got {cells_x}x{cells_y}"
            )));
        }
        if image_width < cells_x || image_height < cells_y {
            return Err(GridError::InvalidSpec(format!(
                "{image_width}x{image_height} image is smaller than {cells_x}x{cells_y} cells"
            )));
        }
        Ok(Self {
            cells_x,
            cells_y,
            image_width,
            image_height,
        })
    }

    pub fn cell_width(&self) -> f64 {
        f64::from(self.image_width) / f64::from(self.cells_x)
    }

    pub fn cell_height(&self) -> f64 {
        f64::from(self.image_height) / f64::from(self.cells_y)
    }

    fn check(&self, image: &Raster) -> Result<(), GridError> {
        if image.dimensions() == (self.image_width, self.image_height) {
            Ok(())
        } else {
            Err(GridError::DimensionMismatch {
                expected_width: self.image_width,
                expected_height: self.image_height,
                actual_width: image.width(),
                actual_height: image.height(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridStyle {
    pub line_color: Rgba,
    pub opacity: f64,
    /// Axis labels every `label_stride` cells; 0 disables labels.
    pub label_stride: u32,
}

impl Default for GridStyle {
    fn default() -> Self {
        Self {
            line_color: BLACK,
            opacity: 0.35,
            label_stride: 5,
        }
    }
}

pub fn pixel_to_grid(px: f64, py: f64, spec: &GridSpec) -> Result<GridCoord, GridError> {
    let inside = px.is_finite()
        && py.is_finite()
        && (0.0..f64::from(spec.image_width)).contains(&px)
        && (0.0..f64::from(spec.image_height)).contains(&py);
    if !inside {
        return Err(GridError::OutOfImage {
            px,
            py,
            width: spec.image_width,
            height: spec.image_height,
        });
    }
    let x = snap_half(px / spec.cell_width());
    let y = snap_half(f64::from(spec.cells_y) - py / spec.cell_height());
    GridCoord::new(x, y).map_err(|_| {
        GridError::InvalidSpec(format!("({px}, {py}) maps outside the grid"))
    })
}

pub fn grid_to_pixel(g: GridCoord, spec: &GridSpec) -> (u32, u32) {
    let px = (g.x() * spec.cell_width()).round();
    let py = ((f64::from(spec.cells_y) - g.y()) * spec.cell_height()).round();
    let clamp = |v: f64, extent: u32| v.clamp(0.0, f64::from(extent - 1)) as u32;
    (clamp(px, spec.image_width), clamp(py, spec.image_height))
}

/// Pixel rectangle covering an ROI. Grid `y_max` maps to the smaller pixel y.
pub fn roi_to_pixel_rect(roi: &RoiBBox, spec: &GridSpec) -> PixelRect {
    let corner = |x, y| grid_to_pixel(GridCoord::new(x, y).expect("roi corners are grid values"), spec);
    let (x0, y0) = corner(roi.x_min(), roi.y_max());
    let (x1, y1) = corner(roi.x_max(), roi.y_min());
    PixelRect {
        x0: x0.min(x1),
        y0: y0.min(y1),
        x1: x0.max(x1),
        y1: y0.max(y1),
    }
}

/// Pixel columns and rows of every cell boundary (`cells + 1` each, edge lines
/// clamped into the image, so tiny images may repeat a position).
pub fn grid_line_positions(spec: &GridSpec) -> (Vec<u32>, Vec<u32>) {
    let place = |i: u32, cell: f64, extent: u32| {
        (f64::from(i) * cell).round().min(f64::from(extent - 1)) as u32
    };
    let columns = (0..=spec.cells_x)
        .map(|i| place(i, spec.cell_width(), spec.image_width))
        .collect();
    let rows = (0..=spec.cells_y)
        .map(|j| place(j, spec.cell_height(), spec.image_height))
        .collect();
    (columns, rows)
}

const MIN_CELL_PX_FOR_LABELS: f64 = 8.0;

/// Returns a copy of `image` with grid lines and axis labels composited on top.
pub fn overlay_grid(image: &Raster, spec: &GridSpec, style: &GridStyle) -> Result<Raster, GridError> {
    spec.check(image)?;
    if !(0.0..=1.0).contains(&style.opacity) {
        return Err(GridError::InvalidSpec(format!(
            "opacity {} outside [0, 1]",
            style.opacity
        )));
    }
    let (w, h) = (spec.image_width as usize, spec.image_height as usize);
    let mut mask = vec![false; w * h];
    let (columns, rows) = grid_line_positions(spec);
    for &x in &columns {
        for y in 0..h {
            mask[y * w + x as usize] = true;
        }
    }
    for &y in &rows {
        mask[y as usize * w..(y as usize + 1) * w].fill(true);
    }

    let roomy = spec.cell_width() >= MIN_CELL_PX_FOR_LABELS
        && spec.cell_height() >= MIN_CELL_PX_FOR_LABELS;
    if style.label_stride > 0 && roomy {
        let mut plot = |x: i64, y: i64| {
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                mask[y as usize * w + x as usize] = true;
            }
        };
        // x labels along the bottom edge, y labels (counting upward) along the left edge
        for i in (0..=spec.cells_x).step_by(style.label_stride as usize) {
            let x = columns[i as usize] as i64;
            draw_number(i, x + 2, h as i64 - 2 - GLYPH_H, &mut plot);
        }
        for j in (0..=spec.cells_y).step_by(style.label_stride as usize) {
            let y = rows[(spec.cells_y - j) as usize] as i64;
            draw_number(j, 2, y - 1 - GLYPH_H, &mut plot);
        }
    }

    let mut out = image.clone();
    for (i, on) in mask.iter().enumerate() {
        if *on {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            let blended = blend_over(out.pixel(x, y), style.line_color, style.opacity);
            out.set_pixel(x, y, blended);
        }
    }
    Ok(out)
}

const GLYPH_W: i64 = 3;
const GLYPH_H: i64 = 5;

/// 3x5 digit glyphs, row-major from the top, MSB = left column.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn draw_number(n: u32, left: i64, top: i64, plot: &mut impl FnMut(i64, i64)) {
    for (k, ch) in n.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = left + k as i64 * (GLYPH_W + 1);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                    plot(gx + col, top + row as i64);
                }
            }
        }
    }
}
