use pairvox::voxel::io::{decode_grid, obj::to_obj, read_grid, write_grid};
use pairvox::{Error, Grid32};

fn chair(r: usize) -> Grid32 {
    Grid32::from_fn(r, |x, y, z| {
        if y == 2 && x > 0 || (z == 0 && y > 2) {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

#[test]
fn files_round_trip_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let g = chair(6);
    for name in ["a.vox1", "a.binvox"] {
        let path = dir.path().join(name);
        write_grid(&g, &path).unwrap();
        let back: Grid32 = read_grid(&path).unwrap();
        assert_eq!(back, g, "{name}");
    }
    let soft = Grid32::from_fn(3, |x, y, z| (x + y + z) as f32 / 6.0).unwrap();
    let path = dir.path().join("soft.vox1");
    write_grid(&soft, &path).unwrap();
    assert_eq!(read_grid::<f32>(&path).unwrap(), soft);
}

#[test]
fn unknown_and_missing_files_report_errors() {
    assert!(matches!(
        decode_grid::<f32>(b"PLY\n"),
        Err(Error::Format { offset: 0, .. })
    ));
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        read_grid::<f32>(dir.path().join("none.vox1")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn obj_has_one_cube_per_occupied_cell() {
    let g = chair(5);
    let (text, stats) = to_obj(&g, 0.5);
    assert_eq!(stats.cubes, g.occupied(0.5));
    assert_eq!(stats.vertices, 8 * stats.cubes);
    assert_eq!(stats.faces, 12 * stats.cubes);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("v ")).count(),
        stats.vertices
    );
    assert_eq!(
        text.lines().filter(|l| l.starts_with("f ")).count(),
        stats.faces
    );
}
