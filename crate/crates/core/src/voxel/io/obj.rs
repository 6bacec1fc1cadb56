//! Wavefront OBJ export with one unit cube per occupied voxel.

use std::fmt::Write;

use crate::scalar::Scalar;
use crate::voxel::VoxelGrid;

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

// Counter-clockwise seen from outside.
const TRIANGLES: [[usize; 3]; 12] = [
    [0, 3, 2],
    [0, 2, 1],
    [4, 5, 6],
    [4, 6, 7],
    [0, 1, 5],
    [0, 5, 4],
    [3, 7, 6],
    [3, 6, 2],
    [0, 4, 7],
    [0, 7, 3],
    [1, 2, 6],
    [1, 6, 5],
];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObjStats {
    pub cubes: usize,
    pub vertices: usize,
    pub faces: usize,
}

/// Renders cells strictly above `threshold` as cubes.
pub fn to_obj<T: Scalar>(grid: &VoxelGrid<T>, threshold: T) -> (String, ObjStats) {
    let r = grid.resolution();
    let mut out = String::from("# voxel cubes\n");
    let mut stats = ObjStats::default();
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                if grid.get(x, y, z) <= threshold {
                    continue;
                }
                let base = stats.vertices + 1;
                for c in CORNERS {
                    let _ = writeln!(out, "v {} {} {}", x + c[0], y + c[1], z + c[2]);
                }
                for t in TRIANGLES {
                    let _ = writeln!(out, "f {} {} {}", base + t[0], base + t[1], base + t[2]);
                }
                stats.cubes += 1;
                stats.vertices += 8;
                stats.faces += 12;
            }
        }
    }
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(text: &str, prefix: &str) -> usize {
        text.lines().filter(|l| l.starts_with(prefix)).count()
    }

    #[test]
    fn empty_and_single() {
        let (text, stats) = to_obj(&VoxelGrid::<f32>::zeros(4), 0.5);
        assert_eq!(stats.vertices, 0);
        assert_eq!(count(&text, "v "), 0);

        let mut g = VoxelGrid::<f32>::zeros(4);
        g.set(1, 2, 3, 0.9);
        let (text, stats) = to_obj(&g, 0.5);
        assert_eq!((stats.vertices, stats.faces), (8, 12));
        assert_eq!(count(&text, "v "), 8);
        assert_eq!(count(&text, "f "), 12);
        assert!(text.contains("v 1 2 3\n") && text.contains("v 2 3 4\n"));
    }

    #[test]
    fn cube_count_matches_occupancy() {
        let g = VoxelGrid::<f32>::from_fn(5, |x, y, z| ((x * y + z) % 3) as f32 / 2.0).unwrap();
        let (text, stats) = to_obj(&g, 0.5);
        assert_eq!(stats.cubes, g.occupied(0.5));
        assert_eq!(count(&text, "f "), 12 * g.occupied(0.5));
    }
}
