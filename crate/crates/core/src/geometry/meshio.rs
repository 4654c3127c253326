//! Line-oriented text format for meshes.

use std::io::{BufRead, Write};

use super::crack::CrackGeometry;
use super::mesher::CrackedMesh;
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &CrackedMesh, mut w: W) -> Result<()> {
    writeln!(w, "ABMESH 1")?;
    writeln!(w, "{}", mesh.vertices.len())?;
    for p in &mesh.vertices {
        writeln!(w, "{:?} {:?}", p[0], p[1])?;
    }
    writeln!(w, "{}", mesh.triangles.len())?;
    for t in &mesh.triangles {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "{}", mesh.crack_pairs.len())?;
    for p in &mesh.crack_pairs {
        writeln!(w, "{} {}", p[0], p[1])?;
    }
    writeln!(w, "{}", mesh.dirichlet_nodes.len())?;
    for i in &mesh.dirichlet_nodes {
        writeln!(w, "{i}")?;
    }
    match mesh.tip_node {
        Some(t) => writeln!(w, "{t}")?,
        None => writeln!(w, "-1")?,
    }
    writeln!(w, "meta {:?} {:?}", mesh.h, mesh.grading_exponent)?;
    Ok(())
}

pub fn read_mesh<R: BufRead>(r: R) -> Result<CrackedMesh> {
    let mut lines = r.lines().map(|l| l.map_err(Error::from)).filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
    let mut next = || -> Result<String> { lines.next().ok_or_else(|| Error::MeshFormat("unexpected end of input".into()))? };
    let bad = |what: &str| Error::MeshFormat(what.to_string());
    if next()?.trim() != "ABMESH 1" {
        return Err(bad("missing ABMESH 1 header"));
    }
    let count = |s: String| s.trim().parse::<usize>().map_err(|_| Error::MeshFormat(format!("bad count {s:?}")));
    let nums = |s: &str, n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = s.split_whitespace().map(|x| x.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| Error::MeshFormat(format!("bad line {s:?}")))?;
        if v.len() != n {
            return Err(Error::MeshFormat(format!("expected {n} fields in {s:?}")));
        }
        Ok(v)
    };
    let nv = count(next()?)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let v = nums(&next()?, 2)?;
        vertices.push([v[0], v[1]]);
    }
    let idx = |x: f64| -> Result<usize> {
        if x >= 0.0 && (x as usize) < nv && x.fract() == 0.0 { Ok(x as usize) } else { Err(Error::MeshFormat(format!("index {x} out of range"))) }
    };
    let nt = count(next()?)?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let v = nums(&next()?, 3)?;
        triangles.push([idx(v[0])?, idx(v[1])?, idx(v[2])?]);
    }
    let np = count(next()?)?;
    let mut crack_pairs = Vec::with_capacity(np);
    for _ in 0..np {
        let v = nums(&next()?, 2)?;
        crack_pairs.push([idx(v[0])?, idx(v[1])?]);
    }
    let nd = count(next()?)?;
    let mut dirichlet_nodes = Vec::with_capacity(nd);
    for _ in 0..nd {
        dirichlet_nodes.push(idx(nums(&next()?, 1)?[0])?);
    }
    let tip_raw = nums(&next()?, 1)?[0];
    let tip_node = if tip_raw < 0.0 { None } else { Some(idx(tip_raw)?) };
    let (mut h, mut grading_exponent) = (0.0, 2.0);
    if let Ok(line) = next() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() == 3 && parts[0] == "meta" {
            h = parts[1].parse().map_err(|_| bad("bad meta line"))?;
            grading_exponent = parts[2].parse().map_err(|_| bad("bad meta line"))?;
        }
    }
    // The crack geometry is recovered from the exit pair and the tip.
    let (crack, crack_params) = match (tip_node, crack_pairs.first()) {
        (Some(t), Some(first)) => {
            let (x, a) = (vertices[first[0]], vertices[t]);
            let alpha = (a[1] - x[1]).atan2(a[0] - x[0]);
            let e = super::crack::unit(alpha);
            let param = |p: [f64; 2]| if p == [0.0, 0.0] { 0.0 } else { p[0] * e[0] + p[1] * e[1] };
            let params: Vec<f64> = crack_pairs.iter().map(|p| param(vertices[p[0]])).collect();
            let c = CrackGeometry { alpha, t_pole: param(a).max(0.0), exit_distance: -param(x) };
            (Some(c), params)
        }
        _ => (None, Vec::new()),
    };
    let s_a_pairs = (0..crack_params.len()).filter(|&i| crack_params[i] >= 0.0).collect();
    Ok(CrackedMesh { vertices, triangles, crack_pairs, crack_params, tip_node, dirichlet_nodes, s_a_pairs, h, grading_exponent, crack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, generate_mesh, insert_crack, DomainSpec, MeshParams};

    #[test]
    fn roundtrip() {
        let d = build_domain(&DomainSpec::disk(1.0)).unwrap();
        let c = insert_crack(&d, 0.0, 0.25).unwrap();
        let m = generate_mesh(&d, Some(&c), &MeshParams::new(0.1)).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let back = read_mesh(buf.as_slice()).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.crack_pairs, m.crack_pairs);
        assert_eq!(back.dirichlet_nodes, m.dirichlet_nodes);
        assert_eq!(back.tip_node, m.tip_node);
        assert_eq!(back.s_a_pairs, m.s_a_pairs);
        assert!(back.crack_params.iter().zip(&m.crack_params).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_mesh("ABMESH 2\n".as_bytes()).is_err());
        assert!(read_mesh("ABMESH 1\n1\n0 0\n1\n0 1 2\n".as_bytes()).is_err());
    }
}
