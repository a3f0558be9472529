use crate::corpus::{BoundingBox, GeometryError};
use serde::{Deserialize, Serialize};

/// Binary patch-resolution prompt marking the relational foreground.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPrompt {
    pub region: BoundingBox,
    pub width: u32,
    pub height: u32,
    pub patch_size: u32,
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl MaskPrompt {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn ones(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Grid as 0/1 rows.
    pub fn to_grid(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(self.cols).map(|r| r.iter().map(|&c| c as u8).collect()).collect()
    }
}

/// A cell is foreground when its patch rectangle overlaps the region with
/// positive area. Patches on the right and bottom edge are clipped to the
/// image.
pub fn build_mask_prompt(region: &BoundingBox, width: u32, height: u32, patch_size: u32) -> Result<MaskPrompt, GeometryError> {
    if patch_size == 0 {
        return Err(GeometryError::ZeroPatch);
    }
    if !region.fits_within(width, height) {
        return Err(GeometryError::OutsideImage { bbox: *region, width, height });
    }
    let rows = height.div_ceil(patch_size) as usize;
    let cols = width.div_ceil(patch_size) as usize;
    // cells overlapping [x_min, x_max) along one axis
    let span = |lo: u32, hi: u32| (lo / patch_size) as usize..hi.div_ceil(patch_size) as usize;
    let (row_span, col_span) = (span(region.y_min(), region.y_max()), span(region.x_min(), region.x_max()));
    let mut cells = vec![false; rows * cols];
    for r in row_span {
        for c in col_span.clone() {
            cells[r * cols + c] = true;
        }
    }
    Ok(MaskPrompt { region: *region, width, height, patch_size, rows, cols, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: u32, b: u32, c: u32, d: u32) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn full_image_is_all_ones() {
        let m = build_mask_prompt(&bx(0, 0, 100, 70), 100, 70, 16).unwrap();
        assert_eq!((m.rows(), m.cols()), (5, 7));
        assert_eq!(m.ones(), 35);
    }

    #[test]
    fn single_patch() {
        let m = build_mask_prompt(&bx(0, 0, 16, 16), 64, 64, 16).unwrap();
        assert_eq!(m.ones(), 1);
        assert!(m.get(0, 0));
    }

    #[test]
    fn straddling_region() {
        // x 15..17 touches columns 0 and 1; y 16..33 touches rows 1 and 2
        let m = build_mask_prompt(&bx(15, 16, 17, 33), 64, 64, 16).unwrap();
        let grid = m.to_grid();
        assert_eq!(grid[0], vec![0, 0, 0, 0]);
        assert_eq!(grid[1], vec![1, 1, 0, 0]);
        assert_eq!(grid[2], vec![1, 1, 0, 0]);
        assert_eq!(grid[3], vec![0, 0, 0, 0]);
    }

    #[test]
    fn errors() {
        assert_eq!(build_mask_prompt(&bx(0, 0, 5, 5), 10, 10, 0), Err(GeometryError::ZeroPatch));
        assert!(matches!(build_mask_prompt(&bx(0, 0, 11, 5), 10, 10, 4), Err(GeometryError::OutsideImage { .. })));
    }
}
