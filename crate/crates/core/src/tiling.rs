//! Pixel-unshuffle / pixel-shuffle between one `H x W` array and `r^2` tiles
//! of `H/r x W/r`.
//!
//! Tile `c` holds the samples at row offset `c / r` and column offset `c % r`:
//! `tile[c][i, j] = x[i * r + c / r, j * r + c % r]`. Every module shares this
//! layout, including the tensor versions in [`crate::autodiff`].

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

/// `scale^2` equally sized sub-arrays in offset-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileStack<T> {
    tiles: Array3<T>,
    scale: usize,
}

impl<T: Clone> TileStack<T> {
    /// Wraps `(scale^2, h, w)` tiles.
    pub fn new(tiles: Array3<T>, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::dim("scale must be at least 1"));
        }
        if tiles.len_of(Axis(0)) != scale * scale {
            return Err(Error::dim(format!(
                "{} tiles cannot form a scale-{scale} stack (need {})",
                tiles.len_of(Axis(0)),
                scale * scale
            )));
        }
        Ok(TileStack { tiles, scale })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn count(&self) -> usize {
        self.tiles.len_of(Axis(0))
    }

    /// `(sub_height, sub_width)`
    pub fn tile_dim(&self) -> (usize, usize) {
        let (_, h, w) = self.tiles.dim();
        (h, w)
    }

    pub fn tile(&self, c: usize) -> ArrayView2<'_, T> {
        self.tiles.index_axis(Axis(0), c)
    }

    pub fn tiles(&self) -> &Array3<T> {
        &self.tiles
    }

    pub fn into_tiles(self) -> Array3<T> {
        self.tiles
    }

    /// Source offset `(row, col)` of tile `c`.
    pub fn offset(&self, c: usize) -> (usize, usize) {
        (c / self.scale, c % self.scale)
    }
}

/// Splits `x` into `r^2` tiles. Lossless.
pub fn pixel_unshuffle<T: Clone>(x: &Array2<T>, r: usize) -> Result<TileStack<T>> {
    if r == 0 {
        return Err(Error::dim("scale must be at least 1"));
    }
    let (h, w) = x.dim();
    if h % r != 0 || w % r != 0 {
        return Err(Error::dim(format!("{h}x{w} is not divisible by scale {r}")));
    }
    let tiles = Array3::from_shape_fn((r * r, h / r, w / r), |(c, i, j)| {
        x[[i * r + c / r, j * r + c % r]].clone()
    });
    Ok(TileStack { tiles, scale: r })
}

/// Interleaves `r^2` tiles back into one array; exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle<T: Clone>(tiles: &TileStack<T>, r: usize) -> Result<Array2<T>> {
    if r == 0 || tiles.count() != r * r {
        return Err(Error::dim(format!(
            "{} tiles cannot be shuffled at scale {r}",
            tiles.count()
        )));
    }
    let (sh, sw) = tiles.tile_dim();
    let t = &tiles.tiles;
    Ok(Array2::from_shape_fn((sh * r, sw * r), |(y, x)| {
        t[[(y % r) * r + x % r, y / r, x / r]].clone()
    }))
}

/// Splits 16 scale-4 tiles into four scale-2 stacks.
///
/// Group `g` takes the tiles whose offsets `(a, b)` satisfy
/// `(a % 2, b % 2) == (g / 2, g % 2)`, placed at within-group offset
/// `(a / 2, b / 2)`. Shuffling each group by 2 yields the scale-2 tile `g` of
/// the original array, so shuffling those four results by 2 again restores it.
pub fn group_tiles<T: Clone>(tiles: &TileStack<T>) -> Result<[TileStack<T>; 4]> {
    if tiles.count() != 16 {
        return Err(Error::dim(format!(
            "pyramid grouping needs 16 tiles, got {}",
            tiles.count()
        )));
    }
    let (sh, sw) = tiles.tile_dim();
    let group = |g: usize| {
        let t = Array3::from_shape_fn((4, sh, sw), |(k, i, j)| {
            tiles.tiles[[group_member(g, k), i, j]].clone()
        });
        TileStack { tiles: t, scale: 2 }
    };
    Ok([group(0), group(1), group(2), group(3)])
}

/// Scale-4 channel that lands at within-group slot `k` of pyramid group `g`.
pub fn group_member(g: usize, k: usize) -> usize {
    let a = 2 * (k / 2) + g / 2;
    let b = 2 * (k % 2) + g % 2;
    a * 4 + b
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scale_one_is_identity() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let t = pixel_unshuffle(&x, 1).unwrap();
        assert_eq!(t.count(), 1);
        assert_eq!(t.tile(0), x);
        assert_eq!(pixel_shuffle(&t, 1).unwrap(), x);
    }

    #[test]
    fn smallest_case() {
        let x = array![['a', 'b'], ['c', 'd']];
        let t = pixel_unshuffle(&x, 2).unwrap();
        let got: Vec<char> = (0..4).map(|c| t.tile(c)[[0, 0]]).collect();
        assert_eq!(got, vec!['a', 'b', 'c', 'd']);
        assert_eq!(t.offset(2), (1, 0));
        assert_eq!(pixel_shuffle(&t, 2).unwrap(), x);
    }

    #[test]
    fn indivisible_and_wrong_counts() {
        let x = Array2::<f64>::zeros((6, 4));
        assert!(matches!(pixel_unshuffle(&x, 4), Err(Error::Dimension(_))));
        let t = pixel_unshuffle(&x, 2).unwrap();
        assert!(matches!(pixel_shuffle(&t, 3), Err(Error::Dimension(_))));
        assert!(matches!(group_tiles(&t), Err(Error::Dimension(_))));
        assert!(TileStack::new(Array3::<f64>::zeros((3, 2, 2)), 2).is_err());
    }

    #[test]
    fn group_membership_table() {
        // 4x4 arange: value = 4 * row + col, so each scale-4 tile is the single
        // value a * 4 + b at its offset
        let x = Array2::from_shape_fn((4, 4), |(i, j)| (4 * i + j) as u32);
        let t = pixel_unshuffle(&x, 4).unwrap();
        let groups = group_tiles(&t).unwrap();
        let table: Vec<Vec<u32>> = groups
            .iter()
            .map(|g| (0..4).map(|k| g.tile(k)[[0, 0]]).collect())
            .collect();
        // enumerated by hand: group (ga, gb) collects rows {ga, ga+2} and cols {gb, gb+2}
        assert_eq!(
            table,
            vec![
                vec![0, 2, 8, 10],
                vec![1, 3, 9, 11],
                vec![4, 6, 12, 14],
                vec![5, 7, 13, 15],
            ]
        );
    }

    #[test]
    fn constant_input_constant_tiles() {
        let x = Array2::from_elem((8, 8), 0.25);
        let t = pixel_unshuffle(&x, 4).unwrap();
        for g in group_tiles(&t).unwrap() {
            assert!(g.tiles().iter().all(|v| *v == 0.25));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn array(r: usize) -> impl Strategy<Value = Array2<i64>> {
            (1usize..5, 1usize..5).prop_flat_map(move |(bh, bw)| {
                proptest::collection::vec(-1000i64..1000, bh * r * bw * r).prop_map(move |v| {
                    Array2::from_shape_vec((bh * r, bw * r), v).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn bijective((r, x) in (1usize..5).prop_flat_map(|r| (Just(r), array(r)))) {
                let t = pixel_unshuffle(&x, r).unwrap();
                prop_assert_eq!(pixel_shuffle(&t, r).unwrap(), x.clone());
                let energy: i64 = x.iter().map(|v| v * v).sum();
                let tiled: i64 = t.tiles().iter().map(|v| v * v).sum();
                prop_assert_eq!(energy, tiled);
                let again = pixel_unshuffle(&pixel_shuffle(&t, r).unwrap(), r).unwrap();
                prop_assert_eq!(again, t);
            }

            #[test]
            fn two_stage_identity(bh in 1usize..4, bw in 1usize..4, v in proptest::collection::vec(-1e3f64..1e3, 16 * 16)) {
                let x = Array2::from_shape_fn((4 * bh, 4 * bw), |(i, j)| v[i * 16 + j]);
                let t = pixel_unshuffle(&x, 4).unwrap();
                let groups = group_tiles(&t).unwrap();
                let stage1: Vec<Array2<f64>> = groups.iter().map(|g| pixel_shuffle(g, 2).unwrap()).collect();
                let (h2, w2) = stage1[0].dim();
                let stack = Array3::from_shape_fn((4, h2, w2), |(g, i, j)| stage1[g][[i, j]]);
                let merged = pixel_shuffle(&TileStack::new(stack, 2).unwrap(), 2).unwrap();
                prop_assert_eq!(&merged, &x);
                prop_assert_eq!(merged, pixel_shuffle(&t, 4).unwrap());
            }
        }
    }
}
