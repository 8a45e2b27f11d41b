use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Splits a `[C, H, W]` image into a `rows × cols` grid of equal,
/// non-overlapping tiles in row-major order.
pub fn tile_grid(image: &Tensor<f32>, rows: usize, cols: usize) -> Result<Vec<Tensor<f32>>> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::dim("tile", format!("expected [C, H, W], got {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if rows == 0 || cols == 0 || h % rows != 0 || w % cols != 0 {
        return Err(Error::dim(
            "tile",
            format!("{h}x{w} image cannot be split into a {rows}x{cols} grid"),
        ));
    }
    let (th, tw) = (h / rows, w / cols);
    let src = image.data();
    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for q in 0..cols {
            let mut data = Vec::with_capacity(c * th * tw);
            for ch in 0..c {
                for y in 0..th {
                    let start = (ch * h + r * th + y) * w + q * tw;
                    data.extend_from_slice(&src[start..start + tw]);
                }
            }
            tiles.push(Tensor::from_parts(vec![c, th, tw], data));
        }
    }
    Ok(tiles)
}

/// 4×4 tiling: a 1024×1024 image becomes sixteen 256×256 tiles.
pub fn tile_image(image: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
    tile_grid(image, 4, 4)
}

/// Inverse of [`tile_grid`].
pub fn untile_grid(tiles: &[Tensor<f32>], rows: usize, cols: usize) -> Result<Tensor<f32>> {
    if tiles.len() != rows * cols || tiles.is_empty() {
        return Err(Error::dim(
            "untile",
            format!("{} tiles for a {rows}x{cols} grid", tiles.len()),
        ));
    }
    let ts = tiles[0].shape().to_vec();
    if ts.len() != 3 || tiles.iter().any(|t| t.shape() != ts.as_slice()) {
        return Err(Error::dim("untile", "tiles must share one [C, h, w] shape"));
    }
    let (c, th, tw) = (ts[0], ts[1], ts[2]);
    let (h, w) = (th * rows, tw * cols);
    let mut data = vec![0.0f32; c * h * w];
    for (i, t) in tiles.iter().enumerate() {
        let (r, q) = (i / cols, i % cols);
        for ch in 0..c {
            for y in 0..th {
                let dst = (ch * h + r * th + y) * w + q * tw;
                let src = (ch * th + y) * tw;
                data[dst..dst + tw].copy_from_slice(&t.data()[src..src + tw]);
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, h, w], data))
}
