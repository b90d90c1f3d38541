//! Readers and writers for every artifact the pipeline touches.
//!
//! All formats are line-oriented UTF-8 text. Floats are written with Rust's
//! shortest round-trip formatting (17 significant digits where needed), so a
//! save/load cycle reproduces every value bit-exactly. Vertex order is
//! preserved verbatim by every reader and writer: order carries
//! correspondence semantics.
//!
//! Formats:
//! - `OFF` / `OBJ` / `PLY` (ASCII): triangle meshes; a file without faces
//!   loads as a point set.
//! - `XYZ`: one `x y z` point per line.
//! - `.nodes`: first line is the node count, then `x y z radius [label]`.
//! - `.defo`: first line is the node count, then `ux uy uz` per node.
//! - `.corr`: `source target [error]` per line, 0-based indices.
//! - labels sidecar: one integer per vertex per line.
//! - `.tbl`: cached shape table keyed by a content hash of
//!   (points, nodes, tolerance).

use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::correspond::Correspondence;
use crate::error::{Error, Result};
use crate::geom::{NodeSet, PointSet, ShapeData, TriMesh};
use crate::mls::{DeformParams, PointEval, ShapeTable};

/// Declared input format, or `Auto` to pick by file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatHint {
    Off,
    Obj,
    Ply,
    Xyz,
    Auto,
}

impl FormatHint {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "off" => Some(FormatHint::Off),
            "obj" => Some(FormatHint::Obj),
            "ply" => Some(FormatHint::Ply),
            "xyz" => Some(FormatHint::Xyz),
            "auto" => Some(FormatHint::Auto),
            _ => None,
        }
    }

    fn resolve(self, path: &Path) -> Result<FormatHint> {
        if self != FormatHint::Auto {
            return Ok(self);
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        FormatHint::from_name(&ext)
            .filter(|f| *f != FormatHint::Auto)
            .ok_or_else(|| {
                Error::Config(format!(
                    "cannot infer format from extension of {}",
                    path.display()
                ))
            })
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("expected a number, got {:?}", tok)))
}

fn parse_usize(tok: &str, path: &Path, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("expected an integer, got {:?}", tok)))
}

/// Non-empty, non-comment lines of a file with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            None
        } else {
            Some((i + 1, t))
        }
    })
}

/// Load a shape; meshes when faces are present, point sets otherwise.
pub fn load_shape(path: &Path, hint: FormatHint) -> Result<ShapeData> {
    let format = hint.resolve(path)?;
    let text = read_to_string(path)?;
    match format {
        FormatHint::Off => parse_off(&text, path),
        FormatHint::Obj => parse_obj(&text, path),
        FormatHint::Ply => parse_ply(&text, path),
        FormatHint::Xyz => parse_xyz(&text, path).map(ShapeData::Points),
        FormatHint::Auto => unreachable!(),
    }
}

fn finish_shape(
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    path: &Path,
) -> Result<ShapeData> {
    if faces.is_empty() {
        Ok(ShapeData::Points(PointSet::new(vertices, None).map_err(
            |_| parse_err(path, 0, "file contains no geometry"),
        )?))
    } else {
        Ok(ShapeData::Mesh(TriMesh::new(vertices, faces, None)?))
    }
}

fn parse_off(text: &str, path: &Path) -> Result<ShapeData> {
    let mut lines = content_lines(text);
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty OFF file"))?;
    let mut counts: Vec<&str> = Vec::new();
    if header == "OFF" {
        let (ln2, c) = lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "missing OFF counts line"))?;
        counts.extend(c.split_whitespace());
        if counts.len() < 2 {
            return Err(parse_err(path, ln2, "OFF counts line needs at least nv nf"));
        }
    } else if let Some(rest) = header.strip_prefix("OFF") {
        counts.extend(rest.split_whitespace());
        if counts.len() < 2 {
            return Err(parse_err(path, ln, "OFF counts line needs at least nv nf"));
        }
    } else {
        return Err(parse_err(path, ln, "missing OFF header"));
    }
    let nv = parse_usize(counts[0], path, ln)?;
    let nf = parse_usize(counts[1], path, ln)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of file in vertex list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse_err(path, ln, "vertex line needs 3 coordinates"));
        }
        vertices.push(Point3::new(
            parse_f64(toks[0], path, ln)?,
            parse_f64(toks[1], path, ln)?,
            parse_f64(toks[2], path, ln)?,
        ));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of file in face list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.is_empty() {
            return Err(parse_err(path, ln, "empty face line"));
        }
        let n = parse_usize(toks[0], path, ln)?;
        if n != 3 {
            return Err(parse_err(
                path,
                ln,
                format!("only triangular faces supported, got {}-gon", n),
            ));
        }
        if toks.len() < 4 {
            return Err(parse_err(path, ln, "face line needs 3 indices"));
        }
        let mut f = [0u32; 3];
        for k in 0..3 {
            let idx = parse_usize(toks[k + 1], path, ln)?;
            if idx >= nv {
                return Err(parse_err(
                    path,
                    ln,
                    format!("face index out of range: {}", idx),
                ));
            }
            f[k] = idx as u32;
        }
        faces.push(f);
    }
    finish_shape(vertices, faces, path)
}

fn parse_obj(text: &str, path: &Path) -> Result<ShapeData> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, l) in content_lines(text) {
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<&str> = toks.collect();
                if c.len() < 3 {
                    return Err(parse_err(path, ln, "vertex line needs 3 coordinates"));
                }
                vertices.push(Point3::new(
                    parse_f64(c[0], path, ln)?,
                    parse_f64(c[1], path, ln)?,
                    parse_f64(c[2], path, ln)?,
                ));
            }
            Some("f") => {
                let c: Vec<&str> = toks.collect();
                if c.len() != 3 {
                    return Err(parse_err(
                        path,
                        ln,
                        format!("only triangular faces supported, got {} indices", c.len()),
                    ));
                }
                let mut f = [0u32; 3];
                for k in 0..3 {
                    // OBJ faces may carry v/vt/vn; the vertex index is first
                    let first = c[k].split('/').next().unwrap();
                    let idx = first.parse::<i64>().map_err(|_| {
                        parse_err(path, ln, format!("expected an index, got {:?}", first))
                    })?;
                    // OBJ is 1-based; 0 (and negative relative indexing) are out of range here
                    if idx < 1 || idx as usize > vertices.len() {
                        return Err(parse_err(
                            path,
                            ln,
                            format!("face index out of range: {}", idx),
                        ));
                    }
                    f[k] = (idx - 1) as u32;
                }
                faces.push(f);
            }
            _ => {} // ignore normals, texcoords, groups, materials
        }
    }
    finish_shape(vertices, faces, path)
}

fn parse_ply(text: &str, path: &Path) -> Result<ShapeData> {
    let mut lines = content_lines(text);
    let (ln, magic) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty PLY file"))?;
    if magic != "ply" {
        return Err(parse_err(path, ln, "missing ply magic"));
    }

    let mut nv = 0usize;
    let mut nf = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of PLY header"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(parse_err(
                    path,
                    ln,
                    format!("unsupported PLY format {:?}", other),
                ));
            }
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                nv = parse_usize(n, path, ln)?;
                in_vertex = true;
            }
            ["element", "face", n] => {
                nf = parse_usize(n, path, ln)?;
                in_vertex = false;
            }
            ["element", ..] => {
                in_vertex = false;
            }
            ["property", "list", ..] => {}
            ["property", _, name] => {
                if in_vertex {
                    vertex_props.push((*name).to_string());
                }
            }
            ["end_header"] => break,
            _ => {
                return Err(parse_err(
                    path,
                    ln,
                    format!("unrecognized header line {:?}", l),
                ))
            }
        }
    }
    let coord_cols: Vec<usize> = ["x", "y", "z"]
        .iter()
        .map(|n| {
            vertex_props
                .iter()
                .position(|p| p == n)
                .ok_or_else(|| parse_err(path, 0, format!("vertex property {:?} missing", n)))
        })
        .collect::<Result<_>>()?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of file in vertex list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < vertex_props.len() {
            return Err(parse_err(path, ln, "vertex line has too few values"));
        }
        vertices.push(Point3::new(
            parse_f64(toks[coord_cols[0]], path, ln)?,
            parse_f64(toks[coord_cols[1]], path, ln)?,
            parse_f64(toks[coord_cols[2]], path, ln)?,
        ));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of file in face list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let n = parse_usize(toks[0], path, ln)?;
        if n != 3 || toks.len() < 4 {
            return Err(parse_err(path, ln, "only triangular faces supported"));
        }
        let mut f = [0u32; 3];
        for k in 0..3 {
            let idx = parse_usize(toks[k + 1], path, ln)?;
            if idx >= nv {
                return Err(parse_err(
                    path,
                    ln,
                    format!("face index out of range: {}", idx),
                ));
            }
            f[k] = idx as u32;
        }
        faces.push(f);
    }
    finish_shape(vertices, faces, path)
}

fn parse_xyz(text: &str, path: &Path) -> Result<PointSet> {
    let mut points = Vec::new();
    for (ln, l) in content_lines(text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(
                path,
                ln,
                format!("expected 3 coordinates, got {}", toks.len()),
            ));
        }
        points.push(Point3::new(
            parse_f64(toks[0], path, ln)?,
            parse_f64(toks[1], path, ln)?,
            parse_f64(toks[2], path, ln)?,
        ));
    }
    if points.is_empty() {
        return Err(parse_err(path, 0, "file contains no points"));
    }
    PointSet::new(points, None)
}

/// Save a shape; format picked by extension (`.off`, `.obj`, `.ply`, `.xyz`).
/// Point sets only support `.xyz`, `.off`, and `.ply`.
pub fn save_shape(shape: &ShapeData, path: &Path) -> Result<()> {
    let format = FormatHint::Auto.resolve(path)?;
    let text = match (shape, format) {
        (ShapeData::Mesh(m), FormatHint::Off) => format_off(&m.vertices, &m.faces),
        (ShapeData::Mesh(m), FormatHint::Obj) => format_obj(&m.vertices, &m.faces),
        (ShapeData::Mesh(m), FormatHint::Ply) => format_ply(&m.vertices, &m.faces),
        (ShapeData::Points(p), FormatHint::Xyz) => format_xyz(&p.points),
        (ShapeData::Points(p), FormatHint::Off) => format_off(&p.points, &[]),
        (ShapeData::Points(p), FormatHint::Ply) => format_ply(&p.points, &[]),
        (ShapeData::Points(_), FormatHint::Obj) => {
            return Err(Error::Config("point sets cannot be saved as OBJ".into()));
        }
        (ShapeData::Mesh(_), FormatHint::Xyz) => {
            return Err(Error::Config(
                "refusing to save a mesh as XYZ (faces would be lost); use .off/.obj/.ply".into(),
            ));
        }
        (_, FormatHint::Auto) => unreachable!(),
    };
    write_string(path, &text)
}

fn format_off(vertices: &[Point3<f64>], faces: &[[u32; 3]]) -> String {
    let mut s = String::from("OFF\n");
    s.push_str(&format!("{} {} 0\n", vertices.len(), faces.len()));
    for v in vertices {
        s.push_str(&format!("{} {} {}\n", v.x, v.y, v.z));
    }
    for f in faces {
        s.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    s
}

fn format_obj(vertices: &[Point3<f64>], faces: &[[u32; 3]]) -> String {
    let mut s = String::new();
    for v in vertices {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in faces {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    s
}

fn format_ply(vertices: &[Point3<f64>], faces: &[[u32; 3]]) -> String {
    let mut s = String::from("ply\nformat ascii 1.0\n");
    s.push_str(&format!("element vertex {}\n", vertices.len()));
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    s.push_str(&format!("element face {}\n", faces.len()));
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in vertices {
        s.push_str(&format!("{} {} {}\n", v.x, v.y, v.z));
    }
    for f in faces {
        s.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    s
}

fn format_xyz(points: &[Point3<f64>]) -> String {
    let mut s = String::new();
    for p in points {
        s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    s
}

/// Save a node set (`.nodes`).
pub fn save_nodes(nodes: &NodeSet, path: &Path) -> Result<()> {
    let mut s = format!("{}\n", nodes.len());
    for i in 0..nodes.len() {
        let p = nodes.positions[i];
        match &nodes.labels {
            Some(l) => s.push_str(&format!(
                "{} {} {} {} {}\n",
                p.x, p.y, p.z, nodes.radii[i], l[i]
            )),
            None => s.push_str(&format!("{} {} {} {}\n", p.x, p.y, p.z, nodes.radii[i])),
        }
    }
    write_string(path, &s)
}

/// Load a node set (`.nodes`).
pub fn load_nodes(path: &Path) -> Result<NodeSet> {
    let text = read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (ln, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty node file"))?;
    let k = parse_usize(first, path, ln)?;
    let mut positions = Vec::with_capacity(k);
    let mut radii = Vec::with_capacity(k);
    let mut labels: Vec<i32> = Vec::new();
    for i in 0..k {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("expected {} node lines, found {}", k, i)))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 && toks.len() != 5 {
            return Err(parse_err(path, ln, "node line needs: x y z radius [label]"));
        }
        positions.push(Point3::new(
            parse_f64(toks[0], path, ln)?,
            parse_f64(toks[1], path, ln)?,
            parse_f64(toks[2], path, ln)?,
        ));
        radii.push(parse_f64(toks[3], path, ln)?);
        if toks.len() == 5 {
            let lab = toks[4]
                .parse::<i32>()
                .map_err(|_| parse_err(path, ln, format!("expected a label, got {:?}", toks[4])))?;
            labels.push(lab);
        } else if !labels.is_empty() {
            return Err(parse_err(path, ln, "inconsistent label column"));
        }
    }
    if !labels.is_empty() && labels.len() != k {
        return Err(parse_err(path, 0, "inconsistent label column"));
    }
    NodeSet::new(
        positions,
        radii,
        if labels.is_empty() {
            None
        } else {
            Some(labels)
        },
    )
}

/// Save deformation parameters (`.defo`).
pub fn save_params(params: &DeformParams, path: &Path) -> Result<()> {
    let mut s = format!("{}\n", params.len());
    for u in &params.values {
        s.push_str(&format!("{} {} {}\n", u.x, u.y, u.z));
    }
    write_string(path, &s)
}

/// Load deformation parameters (`.defo`).
pub fn load_params(path: &Path) -> Result<DeformParams> {
    let text = read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (ln, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty parameter file"))?;
    let k = parse_usize(first, path, ln)?;
    let mut values = Vec::with_capacity(k);
    for i in 0..k {
        let (ln, l) = lines.next().ok_or_else(|| {
            parse_err(
                path,
                0,
                format!("expected {} parameter lines, found {}", k, i),
            )
        })?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(path, ln, "parameter line needs 3 components"));
        }
        let v = Vector3::new(
            parse_f64(toks[0], path, ln)?,
            parse_f64(toks[1], path, ln)?,
            parse_f64(toks[2], path, ln)?,
        );
        if !v.iter().all(|c| c.is_finite()) {
            return Err(parse_err(path, ln, "parameters must be finite"));
        }
        values.push(v);
    }
    Ok(DeformParams { values })
}

/// Save a correspondence (`.corr`): `source target` per line, with the
/// per-point error as an optional third column when present.
pub fn save_corr(corr: &Correspondence, path: &Path) -> Result<()> {
    let mut s = String::new();
    for (src, &tgt) in corr.targets.iter().enumerate() {
        match &corr.errors {
            Some(e) => s.push_str(&format!("{} {} {}\n", src, tgt, e[src])),
            None => s.push_str(&format!("{} {}\n", src, tgt)),
        }
    }
    write_string(path, &s)
}

/// Load raw `(source, target)` index pairs from a `.corr` file, in file
/// order. This is the form sparse keypoint files use: sources are arbitrary
/// indices into the template.
pub fn load_corr_pairs(path: &Path) -> Result<Vec<(u32, u32)>> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (ln, l) in content_lines(&text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 && toks.len() != 3 {
            return Err(parse_err(
                path,
                ln,
                "correspondence line needs: source target [error]",
            ));
        }
        let src = parse_usize(toks[0], path, ln)?;
        let tgt = parse_usize(toks[1], path, ln)?;
        pairs.push((src as u32, tgt as u32));
    }
    if pairs.is_empty() {
        return Err(parse_err(path, 0, "empty correspondence file"));
    }
    Ok(pairs)
}

/// Save raw `(source, target)` pairs as a `.corr` file.
pub fn save_corr_pairs(pairs: &[(u32, u32)], path: &Path) -> Result<()> {
    let mut s = String::new();
    for &(src, tgt) in pairs {
        s.push_str(&format!("{} {}\n", src, tgt));
    }
    write_string(path, &s)
}

/// Load a dense correspondence (`.corr`). Sources must be exactly `0..n` in
/// order, one line per source point.
pub fn load_corr(path: &Path) -> Result<Correspondence> {
    let text = read_to_string(path)?;
    let mut targets = Vec::new();
    let mut errors: Vec<f64> = Vec::new();
    for (ln, l) in content_lines(&text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 && toks.len() != 3 {
            return Err(parse_err(
                path,
                ln,
                "correspondence line needs: source target [error]",
            ));
        }
        let src = parse_usize(toks[0], path, ln)?;
        if src != targets.len() {
            return Err(parse_err(
                path,
                ln,
                format!(
                    "sources must be consecutive from 0; expected {}, got {}",
                    targets.len(),
                    src
                ),
            ));
        }
        let tgt = parse_usize(toks[1], path, ln)?;
        targets.push(tgt as u32);
        if toks.len() == 3 {
            errors.push(parse_f64(toks[2], path, ln)?);
        } else if !errors.is_empty() {
            return Err(parse_err(path, ln, "inconsistent error column"));
        }
    }
    if targets.is_empty() {
        return Err(parse_err(path, 0, "empty correspondence file"));
    }
    if !errors.is_empty() && errors.len() != targets.len() {
        return Err(parse_err(path, 0, "inconsistent error column"));
    }
    Ok(Correspondence {
        targets,
        errors: if errors.is_empty() {
            None
        } else {
            Some(errors)
        },
    })
}

/// Save per-vertex labels, one integer per line.
pub fn save_labels(labels: &[i32], path: &Path) -> Result<()> {
    let mut s = String::new();
    for l in labels {
        s.push_str(&format!("{}\n", l));
    }
    write_string(path, &s)
}

/// Load per-vertex labels; `expected` checks the count when known.
pub fn load_labels(path: &Path, expected: Option<usize>) -> Result<Vec<i32>> {
    let text = read_to_string(path)?;
    let mut labels = Vec::new();
    for (ln, l) in content_lines(&text) {
        let v = l
            .parse::<i32>()
            .map_err(|_| parse_err(path, ln, format!("expected a label, got {:?}", l)))?;
        labels.push(v);
    }
    if let Some(n) = expected {
        if labels.len() != n {
            return Err(Error::Labels(format!(
                "expected {} labels, got {}",
                n,
                labels.len()
            )));
        }
    }
    Ok(labels)
}

/// FNV-1a over the exact bit patterns of everything a table depends on.
pub fn table_content_hash(points: &[Point3<f64>], nodes: &NodeSet, tol: f64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u64| {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for p in points {
        for c in p.coords.iter() {
            eat(c.to_bits());
        }
    }
    for (q, &r) in nodes.positions.iter().zip(&nodes.radii) {
        for c in q.coords.iter() {
            eat(c.to_bits());
        }
        eat(r.to_bits());
    }
    eat(tol.to_bits());
    h
}

/// Persist a precomputed table (`.tbl`) together with its content hash.
pub fn save_table(table: &ShapeTable, hash: u64, path: &Path) -> Result<()> {
    let mut s = String::from("nodefield-table 1\n");
    s.push_str(&format!("hash {:016x}\n", hash));
    s.push_str(&format!("points {}\n", table.len()));
    s.push_str(&format!("nodes {}\n", table.node_count));
    s.push_str(&format!("tol {}\n", table.tol));
    for p in &table.points {
        s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    for e in &table.entries {
        s.push_str(&format!("{}", e.support.len()));
        for (k, &i) in e.support.iter().enumerate() {
            let g = e.grad.get(k).copied().unwrap_or_else(Vector3::zeros);
            s.push_str(&format!(" {} {} {} {} {}", i, e.phi[k], g.x, g.y, g.z));
        }
        s.push('\n');
    }
    write_string(path, &s)
}

/// Load a cached table and its stored content hash. The caller checks the
/// hash against [`table_content_hash`] of the inputs it intends to use.
pub fn load_table(path: &Path) -> Result<(ShapeTable, u64)> {
    let text = read_to_string(path)?;
    let mut lines = content_lines(&text);
    let (ln, magic) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty table file"))?;
    if magic != "nodefield-table 1" {
        return Err(parse_err(path, ln, "not a table file"));
    }
    let mut expect = |name: &str| -> Result<(usize, String)> {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing {} header", name)))?;
        let rest = l
            .strip_prefix(name)
            .ok_or_else(|| parse_err(path, ln, format!("expected {} header", name)))?;
        Ok((ln, rest.trim().to_string()))
    };
    let (ln_h, hash_s) = expect("hash")?;
    let hash = u64::from_str_radix(&hash_s, 16).map_err(|_| parse_err(path, ln_h, "bad hash"))?;
    let (ln_m, m_s) = expect("points")?;
    let m = parse_usize(&m_s, path, ln_m)?;
    let (ln_k, k_s) = expect("nodes")?;
    let node_count = parse_usize(&k_s, path, ln_k)?;
    let (ln_t, t_s) = expect("tol")?;
    let tol = parse_f64(&t_s, path, ln_t)?;

    let mut points = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of point list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(path, ln, "point line needs 3 coordinates"));
        }
        points.push(Point3::new(
            parse_f64(toks[0], path, ln)?,
            parse_f64(toks[1], path, ln)?,
            parse_f64(toks[2], path, ln)?,
        ));
    }
    let mut entries = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of entry list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let n = parse_usize(toks[0], path, ln)?;
        if toks.len() != 1 + 5 * n {
            return Err(parse_err(path, ln, "malformed table entry"));
        }
        let mut support = Vec::with_capacity(n);
        let mut phi = Vec::with_capacity(n);
        let mut grad = Vec::with_capacity(n);
        for k in 0..n {
            let base = 1 + 5 * k;
            let idx = parse_usize(toks[base], path, ln)?;
            if idx >= node_count {
                return Err(parse_err(
                    path,
                    ln,
                    format!("support index out of range: {}", idx),
                ));
            }
            support.push(idx as u32);
            phi.push(parse_f64(toks[base + 1], path, ln)?);
            grad.push(Vector3::new(
                parse_f64(toks[base + 2], path, ln)?,
                parse_f64(toks[base + 3], path, ln)?,
                parse_f64(toks[base + 4], path, ln)?,
            ));
        }
        entries.push(PointEval { support, phi, grad });
    }
    Ok((
        ShapeTable {
            points,
            node_count,
            tol,
            entries,
        },
        hash,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn temp_path(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("nodefield-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn off_tetrahedron_round_trip() {
        let path = temp_path("tetra.off");
        fs::write(
            &path,
            "OFF\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 1 2 3\n3 0 3 2\n",
        )
        .unwrap();
        let shape = load_shape(&path, FormatHint::Auto).unwrap();
        let mesh = shape.as_mesh().expect("faces present => mesh");
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.face_count(), 4);

        let out = temp_path("tetra-out.off");
        save_shape(&shape, &out).unwrap();
        let reloaded = load_shape(&out, FormatHint::Auto).unwrap();
        assert_eq!(shape, reloaded);
    }

    #[test]
    fn xyz_three_points() {
        let path = temp_path("three.xyz");
        fs::write(&path, "0 0 0\n1.5 2.5 3.5\n-1 -2 -3\n").unwrap();
        let shape = load_shape(&path, FormatHint::Auto).unwrap();
        match &shape {
            ShapeData::Points(p) => assert_eq!(p.len(), 3),
            _ => panic!("expected point set"),
        }
    }

    #[test]
    fn obj_one_based_indexing() {
        let path = temp_path("bad.obj");
        fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").unwrap();
        let err = load_shape(&path, FormatHint::Auto).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("face index out of range"), "{}", message);
            }
            other => panic!("unexpected error {:?}", other),
        }

        let good = temp_path("good.obj");
        fs::write(&good, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let shape = load_shape(&good, FormatHint::Auto).unwrap();
        assert_eq!(shape.as_mesh().unwrap().faces[0], [0, 1, 2]);
    }

    #[test]
    fn obj_slash_syntax() {
        let path = temp_path("slashes.obj");
        fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n").unwrap();
        let shape = load_shape(&path, FormatHint::Auto).unwrap();
        assert_eq!(shape.as_mesh().unwrap().faces[0], [0, 1, 2]);
    }

    #[test]
    fn ply_round_trip() {
        let mesh = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.25),
                Point3::new(1.0, 0.125, 0.0),
                Point3::new(0.0, 1.0, -0.5),
            ],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let path = temp_path("tri.ply");
        save_shape(&ShapeData::Mesh(mesh.clone()), &path).unwrap();
        let reloaded = load_shape(&path, FormatHint::Auto).unwrap();
        assert_eq!(reloaded.as_mesh().unwrap(), &mesh);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let path = temp_path("broken.off");
        fs::write(&path, "OFF\n2 0 0\n0 0 0\n1 zebra 0\n").unwrap();
        match load_shape(&path, FormatHint::Auto).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected error {:?}", other),
        }
    }

    #[test]
    fn nodes_round_trip_bit_exact() {
        let nodes = NodeSet::new(
            vec![
                Point3::new(0.1, 0.2, 0.3),
                Point3::new(-1.0 / 3.0, 2.0_f64.sqrt(), 1e-17),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, f64::MIN_POSITIVE),
            ],
            vec![0.4, 0.5, 1.0 / 7.0, 2.0],
            Some(vec![0, 1, -3, 2]),
        )
        .unwrap();
        let path = temp_path("nodes.nodes");
        save_nodes(&nodes, &path).unwrap();
        let reloaded = load_nodes(&path).unwrap();
        assert_eq!(nodes, reloaded);
    }

    #[test]
    fn zero_params_round_trip() {
        let params = DeformParams::zeros(5);
        let path = temp_path("zeros.defo");
        save_params(&params, &path).unwrap();
        assert_eq!(load_params(&path).unwrap(), params);
    }

    #[test]
    fn corr_round_trip_and_line_count() {
        let corr = Correspondence {
            targets: (0..1000).map(|i| (999 - i) as u32).collect(),
            errors: None,
        };
        let path = temp_path("pairs.corr");
        save_corr(&corr, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1000);
        assert_eq!(load_corr(&path).unwrap(), corr);
    }

    #[test]
    fn table_round_trip_with_hash() {
        use crate::mls::{precompute_table, DEFAULT_SINGULARITY_TOL};
        use crate::test_support::{random_covered_points, random_node_set};
        let nodes = random_node_set(20, 0.8, 3);
        let pts = random_covered_points(&nodes, 10, 5);
        let table = precompute_table(&pts, &nodes, DEFAULT_SINGULARITY_TOL).unwrap();
        let hash = table_content_hash(&pts, &nodes, DEFAULT_SINGULARITY_TOL);
        let path = temp_path("cache.tbl");
        save_table(&table, hash, &path).unwrap();
        let (reloaded, stored_hash) = load_table(&path).unwrap();
        assert_eq!(stored_hash, hash);
        assert_eq!(reloaded, table);
    }

    proptest! {
        #[test]
        fn nodes_round_trip_property(
            coords in proptest::collection::vec(-1e3_f64..1e3, 12..60),
        ) {
            let n = coords.len() / 3;
            prop_assume!(n >= 4);
            let positions: Vec<Point3<f64>> = (0..n)
                .map(|i| Point3::new(coords[3 * i], coords[3 * i + 1], coords[3 * i + 2] + i as f64 * 10.0))
                .collect();
            let radii: Vec<f64> = (0..n).map(|i| 0.1 + i as f64 * 0.01).collect();
            let nodes = match NodeSet::new(positions, radii, None) {
                Ok(n) => n,
                Err(_) => return Ok(()), // coincident sample; skip
            };
            let path = temp_path(&format!("prop-{}.nodes", n));
            save_nodes(&nodes, &path).unwrap();
            prop_assert_eq!(load_nodes(&path).unwrap(), nodes);
        }

        #[test]
        fn params_round_trip_property(
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 3..60),
        ) {
            let n = vals.len() / 3;
            prop_assume!(n >= 1);
            let params = DeformParams {
                values: (0..n).map(|i| Vector3::new(vals[3 * i], vals[3 * i + 1], vals[3 * i + 2])).collect(),
            };
            let path = temp_path(&format!("prop-{}.defo", n));
            save_params(&params, &path).unwrap();
            prop_assert_eq!(load_params(&path).unwrap(), params);
        }
    }
}
