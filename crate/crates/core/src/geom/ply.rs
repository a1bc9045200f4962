//! ASCII PLY import/export for point clouds (`x y z [nx ny nz]`, double).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GeomError, PointCloud, Vec3};
use crate::Scalar;

pub fn write_ply<T: Scalar, W: Write>(mut w: W, cloud: &PointCloud<T>) -> Result<(), GeomError> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property double {p}")?;
    }
    if cloud.has_normals() {
        for p in ["nx", "ny", "nz"] {
            writeln!(w, "property double {p}")?;
        }
    }
    writeln!(w, "end_header")?;
    let normals = cloud.normals();
    for (i, p) in cloud.points().iter().enumerate() {
        write!(w, "{} {} {}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64())?;
        if let Some(ns) = normals {
            let n = ns[i];
            write!(w, " {} {} {}", n.x.as_f64(), n.y.as_f64(), n.z.as_f64())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_ply<T: Scalar>(path: impl AsRef<Path>, cloud: &PointCloud<T>) -> Result<(), GeomError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn read_ply<T: Scalar, R: Read>(r: R) -> Result<PointCloud<T>, GeomError> {
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<Option<String>, GeomError> {
        Ok(lines.next().transpose()?)
    };
    let bad = |m: &str| GeomError::Parse(m.to_string());

    if next()?.as_deref().map(str::trim) != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    // (element name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    loop {
        let line = next()?.ok_or_else(|| bad("unterminated header"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(bad("only ascii PLY is supported")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let n = count.parse().map_err(|_| bad("bad element count"))?;
                elements.push((name.to_string(), n, Vec::new()));
            }
            ["property", "list", ..] => {
                let e = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                e.2.push("<list>".into());
            }
            ["property", _ty, name] => {
                let e = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                e.2.push(name.to_string());
            }
            ["end_header"] => break,
            _ => return Err(bad(&format!("unexpected header line: {line}"))),
        }
    }
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (name, count, props) in &elements {
        if name != "vertex" {
            for _ in 0..*count {
                next()?.ok_or_else(|| bad("truncated body"))?;
            }
            continue;
        }
        let col = |n: &str| props.iter().position(|p| p == n);
        let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(bad("vertex lacks x/y/z")),
        };
        let ncols = match (col("nx"), col("ny"), col("nz")) {
            (Some(a), Some(b), Some(c)) => Some((a, b, c)),
            _ => None,
        };
        for _ in 0..*count {
            let line = next()?.ok_or_else(|| bad("truncated vertex list"))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<_, _>>()?;
            let get = |i: usize| vals.get(i).copied().ok_or_else(|| bad("short vertex line"));
            points.push(Vec3::new(T::lit(get(xi)?), T::lit(get(yi)?), T::lit(get(zi)?)));
            if let Some((a, b, c)) = ncols {
                let n = Vec3::new(get(a)?, get(b)?, get(c)?);
                // renormalise: text round trips lose the last ulp
                let n = if n.norm() > 0.0 { n.normalize() } else { n };
                normals.push(n.map(T::lit));
            }
        }
    }
    if normals.is_empty() {
        Ok(PointCloud::new(points))
    } else {
        PointCloud::with_normals(points, normals)
    }
}

pub fn load_ply<T: Scalar>(path: impl AsRef<Path>) -> Result<PointCloud<T>, GeomError> {
    read_ply(File::open(path)?)
}
