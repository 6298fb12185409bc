//! Software rendering of voxel scenes to PNG, plus a layered text grid.
//!
//! Three fixed viewpoints:
//! - `iso`: isometric from the front-right-top (visible faces +x, -y, +z),
//!   painter's order over `x - y + z`;
//! - `front`: orthographic elevation looking along +y (columns = x, rows =
//!   z from the top);
//! - `top`: orthographic plan looking down -z (columns = x, rows = y, with
//!   y = 0 as the first row).

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use crate::voxel::{BoxDims, Coord};

pub const BACKGROUND: [u8; 3] = [32, 34, 40];
const WIRE: [u8; 3] = [200, 200, 200];
const GRID: [u8; 3] = [70, 72, 80];
const ISO_SCALE: f64 = 28.0;
const ORTHO_CELL: u32 = 32;
const MARGIN: u32 = 12;

/// Four corners in box space and a shade factor.
type Face = ([(f64, f64, f64); 4], f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewKind {
    Iso,
    Front,
    Top,
}

impl ViewKind {
    pub const ALL: [ViewKind; 3] = [ViewKind::Iso, ViewKind::Front, ViewKind::Top];

    pub fn name(self) -> &'static str {
        match self {
            ViewKind::Iso => "iso",
            ViewKind::Front => "front",
            ViewKind::Top => "top",
        }
    }
}

/// A voxel to draw, with its flat colour.
#[derive(Clone, Copy, Debug)]
pub struct Voxel {
    pub at: Coord,
    pub rgb: [u8; 3],
}

fn shade(rgb: [u8; 3], factor: f64) -> Rgb<u8> {
    Rgb(rgb.map(|c| (c as f64 * factor).round().clamp(0.0, 255.0) as u8))
}

pub fn render(kind: ViewKind, dims: BoxDims, voxels: &[Voxel]) -> RgbImage {
    match kind {
        ViewKind::Iso => render_iso(dims, voxels, true),
        ViewKind::Front => render_front(dims, voxels),
        ViewKind::Top => render_top(dims, voxels),
    }
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("png encoding into memory cannot fail");
    buf.into_inner()
}

fn project(x: f64, y: f64, z: f64) -> (f64, f64) {
    let sx = (x + y) / std::f64::consts::SQRT_2;
    let sy = (-x + y + 2.0 * z) / 6f64.sqrt();
    (sx, sy)
}

struct IsoCanvas {
    img: RgbImage,
    origin: (f64, f64),
}

impl IsoCanvas {
    fn new(dims: BoxDims) -> Self {
        let (a, b, c) = (dims.a as f64, dims.b as f64, dims.c as f64);
        let corners = [
            project(0.0, 0.0, 0.0),
            project(a, 0.0, 0.0),
            project(0.0, b, 0.0),
            project(0.0, 0.0, c),
            project(a, b, 0.0),
            project(a, 0.0, c),
            project(0.0, b, c),
            project(a, b, c),
        ];
        let min_x = corners.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let max_x = corners.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = corners.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_y = corners.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let w = ((max_x - min_x) * ISO_SCALE).ceil() as u32 + 2 * MARGIN;
        let h = ((max_y - min_y) * ISO_SCALE).ceil() as u32 + 2 * MARGIN;
        IsoCanvas {
            img: RgbImage::from_pixel(w, h, Rgb(BACKGROUND)),
            origin: (
                MARGIN as f64 - min_x * ISO_SCALE,
                MARGIN as f64 + max_y * ISO_SCALE,
            ),
        }
    }

    fn to_px(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        let (sx, sy) = project(x, y, z);
        (self.origin.0 + sx * ISO_SCALE, self.origin.1 - sy * ISO_SCALE)
    }

    fn fill_quad(&mut self, quad: [(f64, f64); 4], color: Rgb<u8>) {
        let min_x = quad
            .iter()
            .map(|p| p.0)
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0) as u32;
        let max_x = quad.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil() as u32;
        let min_y = quad
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0) as u32;
        let max_y = quad.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() as u32;
        let (w, h) = self.img.dimensions();
        for py in min_y..max_y.min(h) {
            for px in min_x..max_x.min(w) {
                let p = (px as f64 + 0.5, py as f64 + 0.5);
                if inside_convex(&quad, p) {
                    self.img.put_pixel(px, py, color);
                }
            }
        }
    }

    fn line(&mut self, from: (f64, f64), to: (f64, f64), color: Rgb<u8>) {
        let steps = ((to.0 - from.0).abs().max((to.1 - from.1).abs()).ceil() as usize).max(1);
        let (w, h) = self.img.dimensions();
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = (from.0 + (to.0 - from.0) * t).round();
            let y = (from.1 + (to.1 - from.1) * t).round();
            if x >= 0.0 && y >= 0.0 && (x as u32) < w && (y as u32) < h {
                self.img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn inside_convex(quad: &[(f64, f64); 4], p: (f64, f64)) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let a = quad[i];
        let b = quad[(i + 1) % 4];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Isometric view. `wireframe` draws the container edges first.
pub fn render_iso(dims: BoxDims, voxels: &[Voxel], wireframe: bool) -> RgbImage {
    let mut canvas = IsoCanvas::new(dims);
    if wireframe {
        let (a, b, c) = (dims.a as f64, dims.b as f64, dims.c as f64);
        let corners = [
            (0.0, 0.0, 0.0),
            (a, 0.0, 0.0),
            (a, b, 0.0),
            (0.0, b, 0.0),
            (0.0, 0.0, c),
            (a, 0.0, c),
            (a, b, c),
            (0.0, b, c),
        ];
        let edges = [
            (0, 1),
            (1, 2),
            (2, 3),
            (3, 0),
            (4, 5),
            (5, 6),
            (6, 7),
            (7, 4),
            (0, 4),
            (1, 5),
            (2, 6),
            (3, 7),
        ];
        for (i, j) in edges {
            let p = corners[i];
            let q = corners[j];
            let from = canvas.to_px(p.0, p.1, p.2);
            let to = canvas.to_px(q.0, q.1, q.2);
            canvas.line(from, to, Rgb(WIRE));
        }
    }
    let mut order: Vec<&Voxel> = voxels.iter().collect();
    order.sort_by_key(|v| (v.at.x - v.at.y + v.at.z, v.at.z, v.at.x, -v.at.y));
    for v in order {
        let (x, y, z) = (v.at.x as f64, v.at.y as f64, v.at.z as f64);
        let faces: [Face; 3] = [
            // +x
            (
                [
                    (x + 1.0, y, z),
                    (x + 1.0, y + 1.0, z),
                    (x + 1.0, y + 1.0, z + 1.0),
                    (x + 1.0, y, z + 1.0),
                ],
                0.78,
            ),
            // -y
            (
                [(x, y, z), (x + 1.0, y, z), (x + 1.0, y, z + 1.0), (x, y, z + 1.0)],
                0.6,
            ),
            // +z
            (
                [
                    (x, y, z + 1.0),
                    (x + 1.0, y, z + 1.0),
                    (x + 1.0, y + 1.0, z + 1.0),
                    (x, y + 1.0, z + 1.0),
                ],
                1.0,
            ),
        ];
        for (corners, factor) in faces {
            let quad = corners.map(|(a, b, c)| canvas.to_px(a, b, c));
            canvas.fill_quad(quad, shade(v.rgb, factor));
            for k in 0..4 {
                canvas.line(quad[k], quad[(k + 1) % 4], shade(v.rgb, factor * 0.45));
            }
        }
    }
    canvas.img
}

fn ortho_canvas(cols: i32, rows: i32) -> RgbImage {
    let w = cols as u32 * ORTHO_CELL + 2 * MARGIN;
    let h = rows as u32 * ORTHO_CELL + 2 * MARGIN;
    let mut img = RgbImage::from_pixel(w, h, Rgb(BACKGROUND));
    for c in 0..=cols as u32 {
        let x = MARGIN + c * ORTHO_CELL;
        for y in MARGIN..=MARGIN + rows as u32 * ORTHO_CELL {
            img.put_pixel(x.min(w - 1), y.min(h - 1), Rgb(GRID));
        }
    }
    for r in 0..=rows as u32 {
        let y = MARGIN + r * ORTHO_CELL;
        for x in MARGIN..=MARGIN + cols as u32 * ORTHO_CELL {
            img.put_pixel(x.min(w - 1), y.min(h - 1), Rgb(GRID));
        }
    }
    img
}

fn fill_cell(img: &mut RgbImage, col: i32, row: i32, color: Rgb<u8>) {
    let x0 = MARGIN + col as u32 * ORTHO_CELL + 1;
    let y0 = MARGIN + row as u32 * ORTHO_CELL + 1;
    for y in y0..y0 + ORTHO_CELL - 1 {
        for x in x0..x0 + ORTHO_CELL - 1 {
            img.put_pixel(x, y, color);
        }
    }
}

/// Pixel at the centre of a grid cell of an orthographic view.
pub fn ortho_cell_center(col: i32, row: i32) -> (u32, u32) {
    (
        MARGIN + col as u32 * ORTHO_CELL + ORTHO_CELL / 2,
        MARGIN + row as u32 * ORTHO_CELL + ORTHO_CELL / 2,
    )
}

fn depth_factor(depth: i32, extent: i32) -> f64 {
    if extent <= 1 {
        1.0
    } else {
        1.0 - 0.45 * depth as f64 / (extent - 1) as f64
    }
}

fn render_front(dims: BoxDims, voxels: &[Voxel]) -> RgbImage {
    let mut img = ortho_canvas(dims.a, dims.c);
    let mut nearest: Vec<Option<&Voxel>> = vec![None; (dims.a * dims.c) as usize];
    for v in voxels.iter().filter(|v| dims.contains(v.at)) {
        let slot = &mut nearest[(v.at.x + dims.a * v.at.z) as usize];
        if slot.is_none_or(|cur| v.at.y < cur.at.y) {
            *slot = Some(v);
        }
    }
    for x in 0..dims.a {
        for z in 0..dims.c {
            if let Some(v) = nearest[(x + dims.a * z) as usize] {
                let f = depth_factor(v.at.y, dims.b);
                fill_cell(&mut img, x, dims.c - 1 - z, shade(v.rgb, f));
            }
        }
    }
    img
}

fn render_top(dims: BoxDims, voxels: &[Voxel]) -> RgbImage {
    let mut img = ortho_canvas(dims.a, dims.b);
    let mut highest: Vec<Option<&Voxel>> = vec![None; (dims.a * dims.b) as usize];
    for v in voxels.iter().filter(|v| dims.contains(v.at)) {
        let slot = &mut highest[(v.at.x + dims.a * v.at.y) as usize];
        if slot.is_none_or(|cur| v.at.z > cur.at.z) {
            *slot = Some(v);
        }
    }
    for x in 0..dims.a {
        for y in 0..dims.b {
            if let Some(v) = highest[(x + dims.a * y) as usize] {
                let f = depth_factor(dims.c - 1 - v.at.z, dims.c);
                fill_cell(&mut img, x, y, shade(v.rgb, f));
            }
        }
    }
    img
}

/// One block per z layer (bottom first), headed `z=K`; rows are y
/// ascending, columns x ascending; `symbol_at` returns `None` for empty.
pub fn text_grid(dims: BoxDims, symbol_at: impl Fn(Coord) -> Option<char>) -> String {
    let mut out = String::new();
    for z in 0..dims.c {
        out.push_str(&format!("z={z}\n"));
        for y in 0..dims.b {
            for x in 0..dims.a {
                out.push(symbol_at(Coord::new(x, y, z)).unwrap_or(crate::palette::EMPTY_SYMBOL));
            }
            out.push('\n');
        }
    }
    out
}
