//! Single-channel grid types: grayscale frames, real-valued saliency maps,
//! binary fixation maps, and pixel rectangles.

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle, half-open: covers columns `x1..x2` and rows
/// `y1..y2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

impl Rect {
    pub fn new(x1: usize, y1: usize, x2: usize, y2: usize) -> Self {
        Rect { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> usize {
        self.x2.saturating_sub(self.x1)
    }

    pub fn height(&self) -> usize {
        self.y2.saturating_sub(self.y1)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    /// Check that the rectangle is non-empty and lies inside a
    /// `frame_w` × `frame_h` grid.
    pub fn validate_in(&self, frame_w: usize, frame_h: usize) -> Result<()> {
        if self.x2 <= self.x1 || self.y2 <= self.y1 {
            return Err(Error::dim(format!(
                "empty rectangle ({},{})..({},{})",
                self.x1, self.y1, self.x2, self.y2
            )));
        }
        if self.x2 > frame_w || self.y2 > frame_h {
            return Err(Error::dim(format!(
                "rectangle ({},{})..({},{}) exceeds {}x{} bounds",
                self.x1, self.y1, self.x2, self.y2, frame_w, frame_h
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "frame dims must be positive");
        Frame {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::dim(format!(
                "frame data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::dim("frame dims must be positive".to_string()));
        }
        Ok(Frame {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Copy of the sub-rectangle as its own frame. The rectangle must be valid
    /// for this frame.
    pub fn crop(&self, r: &Rect) -> Result<Frame> {
        r.validate_in(self.width, self.height)?;
        let mut out = Vec::with_capacity(r.area());
        for y in r.y1..r.y2 {
            out.extend_from_slice(&self.data[y * self.width + r.x1..y * self.width + r.x2]);
        }
        Frame::from_vec(r.height(), r.width(), out)
    }

    /// Overwrite the sub-rectangle with `patch` (which must have the
    /// rectangle's dims).
    pub fn paste(&mut self, r: &Rect, patch: &Frame) -> Result<()> {
        r.validate_in(self.width, self.height)?;
        if patch.height != r.height() || patch.width != r.width() {
            return Err(Error::dim(format!(
                "patch {}x{} does not fit rectangle {}x{}",
                patch.height,
                patch.width,
                r.height(),
                r.width()
            )));
        }
        for (py, y) in (r.y1..r.y2).enumerate() {
            let src = &patch.data[py * patch.width..(py + 1) * patch.width];
            self.data[y * self.width + r.x1..y * self.width + r.x2].copy_from_slice(src);
        }
        Ok(())
    }
}

/// Real-valued single-channel map, row-major. Pipeline outputs keep values in
/// [0,1]; the type itself only requires finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "map dims must be positive");
        SaliencyMap {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::dim(format!(
                "map data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::dim("map dims must be positive".to_string()));
        }
        Ok(SaliencyMap {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, v: f64) -> Self {
        let mut m = SaliencyMap::new(height, width);
        m.data.fill(v);
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_dims(&self, other: &SaliencyMap) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Binary ground-truth grid of recorded gaze positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixationMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl FixationMap {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "map dims must be positive");
        FixationMap {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::dim(format!(
                "fixation data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(FixationMap {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    /// Number of fixated pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Real-valued view (1.0 at fixations, 0.0 elsewhere), for the
    /// distribution-based metrics.
    pub fn to_saliency(&self) -> SaliencyMap {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        SaliencyMap::from_vec(self.height, self.width, data).expect("same dims")
    }
}

/// Centered 2-D Gaussian with peak 1.0 at the grid centre.
///
/// `sigma_y`/`sigma_x` are in pixels; the centre sits at ((h-1)/2, (w-1)/2).
pub fn centered_gaussian(height: usize, width: usize, sigma_y: f64, sigma_x: f64) -> SaliencyMap {
    assert!(sigma_y > 0.0 && sigma_x > 0.0, "sigma must be positive");
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let mut m = SaliencyMap::new(height, width);
    for y in 0..height {
        for x in 0..width {
            let dy = (y as f64 - cy) / sigma_y;
            let dx = (x as f64 - cx) / sigma_x;
            m.set(y, x, (-0.5 * (dy * dy + dx * dx)).exp());
        }
    }
    m
}
