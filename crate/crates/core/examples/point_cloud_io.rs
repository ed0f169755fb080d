//! Writes a sampled sphere as XYZ, reads it back along with PLY and OBJ
//! variants, and assembles a Laplace-Beltrami matrix from the file.

use std::fs;

use meshless_ops::io::{read_point_cloud, write_xyz};
use meshless_ops::surface::{assemble_lb_dm, gbpm_sample, LbConfig, Surface, SurfaceCloud};

fn main() -> meshless_ops::Result<()> {
    let dir = std::env::temp_dir().join("meshless-ops-point-cloud-io");
    fs::create_dir_all(&dir)?;
    let cloud = gbpm_sample(&Surface::unit_sphere(), 0.25, 1.5)?;

    let xyz = dir.join("sphere.xyz");
    write_xyz(&cloud.points, fs::File::create(&xyz)?)?;

    let mut ply = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    let mut obj = String::from("# sphere samples\n");
    for p in cloud.points.points() {
        ply += &format!("{} {} {}\n", p[0], p[1], p[2]);
        obj += &format!("v {} {} {}\n", p[0], p[1], p[2]);
    }
    fs::write(dir.join("sphere.ply"), ply)?;
    fs::write(dir.join("sphere.obj"), obj)?;

    for name in ["sphere.xyz", "sphere.ply", "sphere.obj"] {
        let path = dir.join(name);
        let points = read_point_cloud(&path)?;
        let same = points == cloud.points;
        let surface = SurfaceCloud::from_file_points(points, &path)?;
        let dm = assemble_lb_dm(&surface, &LbConfig::default())?;
        println!("{name}: {} points, identical = {same}, nnz = {}", surface.len(), dm.nnz());
    }
    Ok(())
}
