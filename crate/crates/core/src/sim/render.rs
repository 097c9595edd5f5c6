//! Orthographic top-down rendering of the open box.

use crate::nn::Tensor;
use crate::sim::dynamics::SimState;
use crate::sim::spec::{BoxSpec, ObjectSpec};

pub const IMAGE_SIZE: usize = 96;

pub const FLOOR: [u8; 3] = [205, 170, 120];
pub const WALL: [u8; 3] = [90, 60, 35];
pub const BACKGROUND: [u8; 3] = [40, 40, 40];
pub const OBJECT_BLUE: [u8; 3] = [25, 60, 210];

/// 8-bit RGB image, interleaved, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// `[3, H, W]` tensor with values divided by 255.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(&[3, self.height, self.width], self.to_planar_unit())
            .expect("pixel count matches shape")
    }

    /// Channel-planar floats in `[0, 1]`.
    pub fn to_planar_unit(&self) -> Vec<f32> {
        let hw = self.width * self.height;
        let mut out = vec![0.0f32; 3 * hw];
        for (p, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = px[c] as f32 / 255.0;
            }
        }
        out
    }

    pub fn is_blue_dominant(rgb: [u8; 3]) -> bool {
        let [r, g, b] = rgb.map(i32::from);
        b > r + 50 && b > g + 50
    }

    pub fn blue_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                if Self::is_blue_dominant(self.pixel(row, col)) {
                    out.push((row, col));
                }
            }
        }
        out
    }
}

/// Pixel geometry: pixels per mm and the pixel coordinates of the interior
/// origin corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub scale: f64,
    pub origin_col: f64,
    pub origin_row: f64,
}

impl Projection {
    pub fn for_box(box_spec: &BoxSpec) -> Self {
        let outer_x = box_spec.interior_x + 2.0 * box_spec.wall_thickness;
        let outer_y = box_spec.interior_y + 2.0 * box_spec.wall_thickness;
        let n = IMAGE_SIZE as f64;
        let scale = n / outer_x.max(outer_y);
        Self {
            scale,
            origin_col: (n - outer_x * scale) / 2.0 + box_spec.wall_thickness * scale,
            origin_row: (n - outer_y * scale) / 2.0 + box_spec.wall_thickness * scale,
        }
    }

    /// Floor-frame mm of a pixel centre.
    pub fn to_floor(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5 - self.origin_col) / self.scale,
            (row as f64 + 0.5 - self.origin_row) / self.scale,
        )
    }
}

/// Renders the floor, walls and (optionally) the object silhouette in blue.
pub fn render_topdown(state: &SimState, box_spec: &BoxSpec, object: Option<&ObjectSpec>) -> RgbImage {
    let proj = Projection::for_box(box_spec);
    let w = box_spec.wall_thickness;
    let theta = state.obj_theta.unwrap_or(0.0).to_radians();
    let (s, c) = theta.sin_cos();
    let mut img = RgbImage::new(IMAGE_SIZE, IMAGE_SIZE);
    for row in 0..IMAGE_SIZE {
        for col in 0..IMAGE_SIZE {
            let (x, y) = proj.to_floor(row, col);
            let inside = x >= 0.0 && x < box_spec.interior_x && y >= 0.0 && y < box_spec.interior_y;
            let within_walls = x >= -w && x < box_spec.interior_x + w && y >= -w && y < box_spec.interior_y + w;
            let mut color = if inside {
                FLOOR
            } else if within_walls {
                WALL
            } else {
                BACKGROUND
            };
            if let (true, Some(obj)) = (inside, object) {
                let (dx, dy) = (x - state.obj_pos[0], y - state.obj_pos[1]);
                let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
                if obj.footprint.contains_local(u, v) {
                    color = OBJECT_BLUE;
                }
            }
            img.put(row, col, color);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::spec::make_object_set;

    fn centroid(px: &[(usize, usize)]) -> (f64, f64) {
        let n = px.len() as f64;
        (
            px.iter().map(|p| p.0 as f64 + 0.5).sum::<f64>() / n,
            px.iter().map(|p| p.1 as f64 + 0.5).sum::<f64>() / n,
        )
    }

    #[test]
    fn empty_box_has_no_blue() {
        let b = BoxSpec::default();
        let img = render_topdown(&SimState::at_rest([50.0, 60.0], None), &b, None);
        assert!(img.blue_pixels().is_empty());
        assert_eq!(img.pixels.len(), 96 * 96 * 3);
    }

    #[test]
    fn large_sphere_area() {
        let b = BoxSpec::default();
        let sphere = make_object_set().0[4].clone();
        let img = render_topdown(&SimState::at_rest([50.0, 60.0], None), &b, Some(&sphere));
        let s = Projection::for_box(&b).scale;
        let want = std::f64::consts::PI * (25.0 * s).powi(2);
        let got = img.blue_pixels().len() as f64;
        assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
    }

    #[test]
    fn translation_moves_centroid() {
        let b = BoxSpec::default();
        let s = Projection::for_box(&b).scale;
        for obj in make_object_set().0.iter().step_by(2) {
            let theta = obj.shape.is_oriented().then_some(20.0);
            let a = render_topdown(&SimState::at_rest([45.0, 55.0], theta), &b, Some(obj));
            let moved = render_topdown(&SimState::at_rest([55.0, 62.0], theta), &b, Some(obj));
            let (r0, c0) = centroid(&a.blue_pixels());
            let (r1, c1) = centroid(&moved.blue_pixels());
            assert!(((c1 - c0) - s * 10.0).abs() <= 0.5, "{}: {}", obj.id, c1 - c0);
            assert!(((r1 - r0) - s * 7.0).abs() <= 0.5, "{}: {}", obj.id, r1 - r0);
        }
    }

    #[test]
    fn tensor_is_unit_scaled() {
        let b = BoxSpec::default();
        let img = render_topdown(&SimState::at_rest([50.0, 60.0], None), &b, None);
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[3, 96, 96]);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mut white = RgbImage::new(1, 1);
        white.pixels = vec![255, 255, 255];
        assert_eq!(white.to_tensor().data(), &[1.0, 1.0, 1.0]);
    }
}
