//! Reference reader for the binary PLY layout splat viewers consume.

use std::collections::HashMap;

pub struct SplatPly {
    pub count: usize,
    pub properties: Vec<String>,
    pub vertices: Vec<HashMap<String, f32>>,
}

pub fn parse_splat_ply(bytes: &[u8]) -> Result<SplatPly, String> {
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or("no end_header")?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| e.to_string())?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err("missing ply magic".into());
    }
    if lines.next() != Some("format binary_little_endian 1.0") {
        return Err("not binary little endian".into());
    }
    let mut count = None;
    let mut properties = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|e| e.to_string())?),
            ["element", other, _] => return Err(format!("unexpected element {other}")),
            ["property", "float", name] => properties.push(name.to_string()),
            ["property", ty, _] => return Err(format!("unexpected property type {ty}")),
            ["comment", ..] => {}
            _ => return Err(format!("bad header line {line:?}")),
        }
    }
    let count = count.ok_or("no vertex element")?;
    for required in [
        "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
        "rot_2", "rot_3",
    ] {
        if !properties.iter().any(|p| p == required) {
            return Err(format!("missing property {required}"));
        }
    }
    let body = &bytes[end + 11..];
    let stride = properties.len() * 4;
    if body.len() != count * stride {
        return Err(format!("body has {} bytes, expected {}", body.len(), count * stride));
    }
    let vertices = body
        .chunks(stride)
        .map(|row| {
            properties
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let v = f32::from_le_bytes(row[4 * k..4 * k + 4].try_into().unwrap());
                    (name.clone(), v)
                })
                .collect()
        })
        .collect();
    Ok(SplatPly {
        count,
        properties,
        vertices,
    })
}
