//! PascalVOC annotation parsing and the flat annotation CSV.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = ["filename", "width", "height", "class", "xmin", "ymin", "xmax", "ymax"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocObject {
    pub class_name: String,
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocAnnotation {
    pub filename: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<VocObject>,
}

/// One CSV row per annotated object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub filename: String,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "class")]
    pub class_name: String,
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

fn check_box(what: &str, width: u32, height: u32, b: [u32; 4]) -> Result<()> {
    let [xmin, ymin, xmax, ymax] = b;
    if xmin >= xmax || xmax > width || ymin >= ymax || ymax > height {
        return Err(Error::Validation(format!(
            "{what}: box ({xmin},{ymin},{xmax},{ymax}) is not inside a {width}×{height} image with min < max"
        )));
    }
    Ok(())
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn int_field(node: roxmltree::Node, name: &str, path: &str) -> Result<u32> {
    let text = child(node, name)
        .and_then(|n| n.text())
        .map(str::trim)
        .ok_or_else(|| Error::Schema(format!("{path}/{name}")))?;
    if let Ok(v) = text.parse::<u32>() {
        return Ok(v);
    }
    // some labeling tools write "48.0"
    match text.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) => Ok(v as u32),
        _ => Err(Error::Schema(format!("{path}/{name}"))),
    }
}

pub fn parse_voc(xml: &[u8]) -> Result<VocAnnotation> {
    let text = std::str::from_utf8(xml).map_err(|e| Error::Xml {
        line: 1,
        column: 1,
        message: format!("not UTF-8: {e}"),
    })?;
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if !root.has_tag_name("annotation") {
        return Err(Error::Schema("annotation".into()));
    }
    let filename = child(root, "filename")
        .and_then(|n| n.text())
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .ok_or_else(|| Error::Schema("annotation/filename".into()))?;
    let size = child(root, "size").ok_or_else(|| Error::Schema("annotation/size".into()))?;
    let width = int_field(size, "width", "annotation/size")?;
    let height = int_field(size, "height", "annotation/size")?;
    if width == 0 || height == 0 {
        return Err(Error::Validation(format!("{filename}: zero image size")));
    }
    let mut objects = Vec::new();
    for (i, obj) in root.children().filter(|c| c.has_tag_name("object")).enumerate() {
        let path = format!("annotation/object[{i}]");
        let class_name = child(obj, "name")
            .and_then(|n| n.text())
            .map(|t| t.trim().to_string())
            .ok_or_else(|| Error::Schema(format!("{path}/name")))?;
        let bb_path = format!("{path}/bndbox");
        let bb = child(obj, "bndbox").ok_or_else(|| Error::Schema(bb_path.clone()))?;
        let b = [
            int_field(bb, "xmin", &bb_path)?,
            int_field(bb, "ymin", &bb_path)?,
            int_field(bb, "xmax", &bb_path)?,
            int_field(bb, "ymax", &bb_path)?,
        ];
        check_box(&format!("{filename} object {i}"), width, height, b)?;
        objects.push(VocObject {
            class_name,
            xmin: b[0],
            ymin: b[1],
            xmax: b[2],
            ymax: b[3],
        });
    }
    Ok(VocAnnotation {
        filename,
        width,
        height,
        objects,
    })
}

/// Flattens annotations to rows: annotation order, then object order.
pub fn voc_to_rows(annotations: &[VocAnnotation]) -> Vec<AnnotationRow> {
    annotations
        .iter()
        .flat_map(|a| {
            a.objects.iter().map(move |o| AnnotationRow {
                filename: a.filename.clone(),
                width: a.width,
                height: a.height,
                class_name: o.class_name.clone(),
                xmin: o.xmin,
                ymin: o.ymin,
                xmax: o.xmax,
                ymax: o.ymax,
            })
        })
        .collect()
}

pub fn rows_to_csv(rows: &[AnnotationRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<AnnotationRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Format(format!(
            "annotation CSV header must be `{}`",
            CSV_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: AnnotationRow = rec?;
        check_box(
            &format!("csv row {}", i + 1),
            row.width,
            row.height,
            [row.xmin, row.ymin, row.xmax, row.ymax],
        )?;
        rows.push(row);
    }
    Ok(rows)
}
