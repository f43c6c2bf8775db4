//! Wavefront OBJ subset: `v`, `vn` and `f` records.
//!
//! Faces keep only the vertex index of each `i/t/n` corner, polygons are
//! fan-triangulated, negative indices count back from the last vertex read.
//! Vertex normals are attached when there is exactly one `vn` per `v`;
//! other `vn` layouts are ignored.

use std::fmt::Write as _;

use surfreg_core::{Mesh, Vec3};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ObjError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ObjError {
    ObjError { line, message: message.into() }
}

fn parse_triple(fields: &mut std::str::SplitWhitespace<'_>, line: usize, what: &str) -> Result<Vec3, ObjError> {
    let mut c = [0.0; 3];
    for (k, slot) in c.iter_mut().enumerate() {
        let tok = fields
            .next()
            .ok_or_else(|| err(line, format!("{what} needs 3 coordinates, found {k}")))?;
        let v: f64 = tok
            .parse()
            .map_err(|_| err(line, format!("malformed number {tok:?}")))?;
        if !v.is_finite() {
            return Err(err(line, format!("non-finite coordinate {tok:?}")));
        }
        *slot = v;
    }
    Ok(Vec3::from_array(c))
}

fn parse_corner(tok: &str, line: usize, count: usize) -> Result<i64, ObjError> {
    let head = tok.split('/').next().unwrap_or("");
    let idx: i64 = head
        .parse()
        .map_err(|_| err(line, format!("malformed face index {tok:?}")))?;
    match idx {
        0 => Err(err(line, "face index 0 is invalid (indices are 1-based)")),
        i if i < 0 => {
            let back = i.unsigned_abs();
            if back > count as u64 {
                Err(err(line, format!("face index {i} reaches before the first vertex")))
            } else {
                Ok(count as i64 + i)
            }
        }
        i => Ok(i - 1),
    }
}

pub fn parse_obj(text: &str) -> Result<Mesh, ObjError> {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    // (line, triangle) pairs, checked once all vertices are known
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => vertices.push(parse_triple(&mut fields, line, "vertex")?),
            Some("vn") => {
                let n = parse_triple(&mut fields, line, "normal")?;
                let unit = n
                    .normalized()
                    .ok_or_else(|| err(line, "zero-length normal"))?;
                normals.push(unit);
            }
            Some("f") => {
                let corners = fields
                    .map(|tok| parse_corner(tok, line, vertices.len()))
                    .collect::<Result<Vec<_>, _>>()?;
                if corners.len() < 3 {
                    return Err(err(line, format!("face needs at least 3 vertices, found {}", corners.len())));
                }
                for k in 1..corners.len() - 1 {
                    faces.push((line, [corners[0], corners[k], corners[k + 1]]));
                }
            }
            _ => {}
        }
    }

    let n = vertices.len() as i64;
    let mut tris = Vec::with_capacity(faces.len());
    for (line, f) in faces {
        if let Some(bad) = f.iter().find(|&&i| i >= n) {
            return Err(err(line, format!("face index {} out of range (1..={n})", bad + 1)));
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(err(line, "degenerate face repeats a vertex"));
        }
        tris.push([f[0] as usize, f[1] as usize, f[2] as usize]);
    }
    let mut mesh = Mesh::new(vertices, tris);
    if !normals.is_empty() && normals.len() == mesh.len() {
        mesh.normals = Some(normals);
    }
    Ok(mesh)
}

/// `v` coordinate formatting: 9 significant digits, positional notation for
/// moderate exponents, trailing zeros trimmed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    let mut emit = |tag: &str, p: &Vec3| {
        let _ = writeln!(out, "{tag} {} {} {}", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z));
    };
    for v in &mesh.vertices {
        emit("v", v);
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            emit("vn", n);
        }
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}
