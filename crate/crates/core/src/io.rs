//! On-disk formats.
//!
//! Binary files are little-endian with a four-byte magic followed by `u32`
//! dimensions and a row-major payload:
//!
//! | file            | layout                                        |
//! |-----------------|-----------------------------------------------|
//! | `embeddings.bin`| `EMB1` `N` `D` then `N*D` `f32`               |
//! | `coords.bin`    | `CRD1` `N` then `N*2` `f32`                   |
//! | `probs/<id>.prb`| `PRB1` `C` `H` `W` then `C*H*W` `f32`         |
//! | `masks/<id>.msk`| `MSK1` `C` `H` `W` then `H*W` `u16`           |
//!
//! Row order always follows `items.json`. Manifests are pretty-printed JSON
//! and scatter exports are CSV.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::data_model::{
    ClusteringResult, EmbeddingSet, ItemId, ProbabilityMap, Projection2D, Reason, SelectionManifest,
};
use crate::error::{Error, Result};
use crate::metrics::LabelMask;

pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"EMB1";
pub const COORDS_MAGIC: &[u8; 4] = b"CRD1";
pub const PROBS_MAGIC: &[u8; 4] = b"PRB1";
pub const MASK_MAGIC: &[u8; 4] = b"MSK1";

/// One line of `items.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: ItemId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

impl ItemRecord {
    pub fn new(id: ItemId) -> Self {
        Self {
            id,
            source: None,
            mask: None,
        }
    }
}

/// Reads the canonical item list (a JSON array of records).
pub fn read_items(path: &Path) -> Result<Vec<ItemRecord>> {
    let items: Vec<ItemRecord> = serde_json::from_slice(&fs::read(path)?)?;
    let ids: Vec<ItemId> = items.iter().map(|r| r.id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(format!("duplicate id: {}", w[0])));
    }
    Ok(items)
}

pub fn write_items(path: &Path, items: &[ItemRecord]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(items)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

struct Reader<'a> {
    cursor: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self {
            cursor: Cursor::new(bytes),
        }
    }

    fn remaining(&self) -> usize {
        self.cursor.get_ref().len() - self.cursor.position() as usize
    }

    fn need(&self, field: &'static str, bytes: usize) -> Result<()> {
        if self.remaining() < bytes {
            return Err(Error::TruncatedFile {
                field,
                expected: bytes,
                available: self.remaining(),
            });
        }
        Ok(())
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        self.need("magic", 4)?;
        let mut found = [0u8; 4];
        self.cursor.read_exact(&mut found)?;
        if &found != expected {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(&found).into_owned(),
            });
        }
        Ok(())
    }

    fn dim(&mut self, field: &'static str) -> Result<usize> {
        self.need(field, 4)?;
        Ok(self.cursor.read_u32::<LittleEndian>()? as usize)
    }

    fn f32s(&mut self, field: &'static str, count: usize) -> Result<Vec<f32>> {
        self.need(field, count.saturating_mul(4))?;
        let mut out = vec![0f32; count];
        self.cursor.read_f32_into::<LittleEndian>(&mut out)?;
        Ok(out)
    }

    fn u16s(&mut self, field: &'static str, count: usize) -> Result<Vec<u16>> {
        self.need(field, count.saturating_mul(2))?;
        let mut out = vec![0u16; count];
        self.cursor.read_u16_into::<LittleEndian>(&mut out)?;
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            extra => Err(Error::CountMismatch {
                field: "trailing bytes",
                expected: 0,
                found: extra,
            }),
        }
    }
}

fn dim_u32(field: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{field} = {v} does not fit in u32")))
}

fn check_count(field: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::CountMismatch {
            field,
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an `EMB1` buffer and pairs its rows with `ids`.
pub fn parse_embeddings(bytes: &[u8], ids: &[ItemId]) -> Result<EmbeddingSet> {
    let mut r = Reader::new(bytes);
    r.magic(EMBEDDINGS_MAGIC)?;
    let n = r.dim("N")?;
    let d = r.dim("D")?;
    check_count("N", ids.len(), n)?;
    let values = r.f32s("payload", n * d)?;
    r.finish()?;
    EmbeddingSet::new(ids.to_vec(), values.into_iter().map(f64::from).collect(), d)
}

pub fn read_embeddings(path: &Path, ids: &[ItemId]) -> Result<EmbeddingSet> {
    parse_embeddings(&fs::read(path)?, ids)
}

/// Serialises features as `f32`; values that are not exactly representable
/// are rounded.
pub fn encode_embeddings(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * set.features().len());
    out.write_all(EMBEDDINGS_MAGIC)?;
    out.write_u32::<LittleEndian>(dim_u32("N", set.len())?)?;
    out.write_u32::<LittleEndian>(dim_u32("D", set.dim())?)?;
    for &v in set.features() {
        out.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    fs::write(path, encode_embeddings(set)?)?;
    Ok(())
}

pub fn parse_coords(bytes: &[u8], ids: &[ItemId]) -> Result<Projection2D> {
    let mut r = Reader::new(bytes);
    r.magic(COORDS_MAGIC)?;
    let n = r.dim("N")?;
    check_count("N", ids.len(), n)?;
    let values = r.f32s("payload", n * 2)?;
    r.finish()?;
    let coords = values
        .chunks_exact(2)
        .map(|c| [f64::from(c[0]), f64::from(c[1])])
        .collect();
    Projection2D::new(ids.to_vec(), coords)
}

pub fn read_coords(path: &Path, ids: &[ItemId]) -> Result<Projection2D> {
    parse_coords(&fs::read(path)?, ids)
}

pub fn encode_coords(projection: &Projection2D) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + 8 * projection.len());
    out.write_all(COORDS_MAGIC)?;
    out.write_u32::<LittleEndian>(dim_u32("N", projection.len())?)?;
    for c in projection.coords() {
        out.write_f32::<LittleEndian>(c[0] as f32)?;
        out.write_f32::<LittleEndian>(c[1] as f32)?;
    }
    Ok(out)
}

pub fn write_coords(path: &Path, projection: &Projection2D) -> Result<()> {
    fs::write(path, encode_coords(projection)?)?;
    Ok(())
}

/// Rounds every coordinate through `f32`, giving exactly what a
/// `coords.bin` round trip would produce.
pub fn quantize_projection(projection: &Projection2D) -> Result<Projection2D> {
    let coords = projection
        .coords()
        .iter()
        .map(|c| [f64::from(c[0] as f32), f64::from(c[1] as f32)])
        .collect();
    Projection2D::new(projection.ids().to_vec(), coords)
}

pub fn parse_probability_map(bytes: &[u8], id: ItemId) -> Result<ProbabilityMap> {
    let mut r = Reader::new(bytes);
    r.magic(PROBS_MAGIC)?;
    let c = r.dim("C")?;
    let h = r.dim("H")?;
    let w = r.dim("W")?;
    let values = r.f32s("payload", c * h * w)?;
    r.finish()?;
    ProbabilityMap::new(id, c, h, w, values)
}

pub fn read_probability_map(path: &Path, id: ItemId) -> Result<ProbabilityMap> {
    parse_probability_map(&fs::read(path)?, id)
}

pub fn encode_probability_map(map: &ProbabilityMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + 4 * map.probs().len());
    out.write_all(PROBS_MAGIC)?;
    out.write_u32::<LittleEndian>(dim_u32("C", map.classes())?)?;
    out.write_u32::<LittleEndian>(dim_u32("H", map.height())?)?;
    out.write_u32::<LittleEndian>(dim_u32("W", map.width())?)?;
    for &p in map.probs() {
        out.write_f32::<LittleEndian>(p)?;
    }
    Ok(out)
}

pub fn write_probability_map(path: &Path, map: &ProbabilityMap) -> Result<()> {
    fs::write(path, encode_probability_map(map)?)?;
    Ok(())
}

pub fn parse_mask(bytes: &[u8], id: ItemId) -> Result<LabelMask> {
    let mut r = Reader::new(bytes);
    r.magic(MASK_MAGIC)?;
    let c = r.dim("C")?;
    let h = r.dim("H")?;
    let w = r.dim("W")?;
    let labels = r.u16s("payload", h * w)?;
    r.finish()?;
    LabelMask::new(id, c, h, w, labels)
}

pub fn read_mask(path: &Path, id: ItemId) -> Result<LabelMask> {
    parse_mask(&fs::read(path)?, id)
}

pub fn encode_mask(mask: &LabelMask) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + 2 * mask.labels().len());
    out.write_all(MASK_MAGIC)?;
    out.write_u32::<LittleEndian>(dim_u32("C", mask.classes())?)?;
    out.write_u32::<LittleEndian>(dim_u32("H", mask.height())?)?;
    out.write_u32::<LittleEndian>(dim_u32("W", mask.width())?)?;
    for &l in mask.labels() {
        out.write_u16::<LittleEndian>(l)?;
    }
    Ok(out)
}

pub fn write_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    fs::write(path, encode_mask(mask)?)?;
    Ok(())
}

/// Canonical JSON text of a manifest (trailing newline included).
pub fn manifest_json(manifest: &SelectionManifest) -> Result<String> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    Ok(text)
}

pub fn write_manifest(manifest: &SelectionManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    fs::write(path, manifest_json(manifest)?)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<SelectionManifest> {
    let manifest: SelectionManifest = serde_json::from_slice(&fs::read(path)?)?;
    manifest.validate()?;
    Ok(manifest)
}

/// Role of an item in a scatter export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScatterRole {
    Pool,
    ColdStart,
    Acquired,
    Test,
}

impl ScatterRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ScatterRole::Pool => "pool",
            ScatterRole::ColdStart => "coldstart",
            ScatterRole::Acquired => "acquired",
            ScatterRole::Test => "test",
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with columns `id,x,y,cluster,role`, one row per item in canonical
/// order. Items in `test_ids` that were not selected get role `test`.
pub fn scatter_csv(
    projection: &Projection2D,
    clustering: Option<&ClusteringResult>,
    manifest: &SelectionManifest,
    test_ids: &[ItemId],
) -> Result<String> {
    if let Some(c) = clustering {
        check_count("cluster labels", projection.len(), c.labels.len())?;
    }
    let roles: std::collections::HashMap<&ItemId, ScatterRole> = manifest
        .entries
        .iter()
        .map(|e| {
            let role = if e.reason == Reason::Acquisition {
                ScatterRole::Acquired
            } else {
                ScatterRole::ColdStart
            };
            (&e.id, role)
        })
        .collect();
    if let Some(e) = manifest
        .entries
        .iter()
        .find(|e| projection.index_of(&e.id).is_none())
    {
        return Err(Error::InvalidInput(format!(
            "manifest id {} is not in the pool",
            e.id
        )));
    }
    let mut out = String::from("id,x,y,cluster,role\n");
    for (i, (id, c)) in projection.ids().iter().zip(projection.coords()).enumerate() {
        let role = roles.get(id).copied().unwrap_or(if test_ids.contains(id) {
            ScatterRole::Test
        } else {
            ScatterRole::Pool
        });
        let cluster = clustering.map_or(String::new(), |cl| cl.labels[i].to_string());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(id.as_str()),
            c[0],
            c[1],
            cluster,
            role.as_str()
        ));
    }
    Ok(out)
}

pub fn export_scatter(
    projection: &Projection2D,
    clustering: Option<&ClusteringResult>,
    manifest: &SelectionManifest,
    test_ids: &[ItemId],
    path: &Path,
) -> Result<()> {
    fs::write(
        path,
        scatter_csv(projection, clustering, manifest, test_ids)?,
    )?;
    Ok(())
}
