//! Regular 3D grid indexing shared by geometry, solver and windowing.
//!
//! All flattened arrays use x-fastest order: `idx = i + nx * (j + ny * k)`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn max_extent(&self) -> usize {
        self.nx.max(self.ny).max(self.nz)
    }

    #[inline]
    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.contains(c));
        c.i + self.nx * (c.j + self.ny * c.k)
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> Coord {
        let i = idx % self.nx;
        let rest = idx / self.nx;
        Coord::new(i, rest % self.ny, rest / self.ny)
    }

    #[inline]
    pub fn contains(&self, c: Coord) -> bool {
        c.i < self.nx && c.j < self.ny && c.k < self.nz
    }

    /// Signed-offset neighbor lookup; `None` when it falls outside the grid.
    #[inline]
    pub fn offset(&self, c: Coord, d: [isize; 3]) -> Option<Coord> {
        let i = c.i as isize + d[0];
        let j = c.j as isize + d[1];
        let k = c.k as isize + d[2];
        if i < 0 || j < 0 || k < 0 {
            return None;
        }
        let n = Coord::new(i as usize, j as usize, k as usize);
        self.contains(n).then_some(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Coord {
    pub const fn new(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, k }
    }
}

/// The six face directions, ordered -x, +x, -y, +y, -z, +z.
pub const FACE_DIRS: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Index of the -z face in [`FACE_DIRS`].
pub const FACE_BOTTOM: usize = 4;

/// Pack booleans LSB-first into bytes.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (n, &b) in bits.iter().enumerate() {
        if b {
            out[n / 8] |= 1 << (n % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], count: usize) -> Vec<bool> {
    (0..count).map(|n| bytes[n / 8] & (1 << (n % 8)) != 0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_is_x_fastest() {
        let d = Dims::new(3, 4, 5);
        assert_eq!(d.index(Coord::new(1, 0, 0)), 1);
        assert_eq!(d.index(Coord::new(0, 1, 0)), 3);
        assert_eq!(d.index(Coord::new(0, 0, 1)), 12);
        for idx in 0..d.len() {
            assert_eq!(d.index(d.coord(idx)), idx);
        }
    }

    #[test]
    fn bit_packing_round_trip() {
        let bits: Vec<bool> = (0..19).map(|n| n % 3 == 0).collect();
        let packed = pack_bits(&bits);
        assert_eq!(packed.len(), 3);
        assert_eq!(packed[0], 0b0100_1001);
        assert_eq!(unpack_bits(&packed, 19), bits);
    }
}
