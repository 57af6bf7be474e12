//! Location resolution with two agreeing providers, and region lookup.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytics::stats::{pearson, CorrelationReport};
use crate::corpus::{read_jsonl_file, write_jsonl_file, UserRecord};
use crate::error::{Error, Result};

/// Maximum per-axis disagreement, in degrees, for two answers to agree.
pub const AGREEMENT_DEGREES: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(lat.is_finite() && lon.is_finite()) || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Data(format!("coordinates out of range: ({lat}, {lon})")));
        }
        Ok(Self { lat, lon })
    }
}

/// Answers a free-form location query. `Ok(None)` means "not found";
/// transport failures are [`Error::Provider`].
pub trait GeoProvider: Sync {
    fn name(&self) -> &str;

    fn lookup(&self, query: &str) -> Result<Option<GeoPoint>>;
}

/// Lowercase, alphanumeric words separated by single spaces.
pub fn normalize_query(q: &str) -> String {
    q.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub query: String,
    pub lat: f64,
    pub lon: f64,
}

/// Offline provider backed by a list of known queries.
#[derive(Debug, Clone)]
pub struct GazetteerProvider {
    name: String,
    exact: HashMap<String, GeoPoint>,
    normalized: HashMap<String, GeoPoint>,
}

impl GazetteerProvider {
    /// On normalized-key collisions the first entry wins.
    pub fn new(name: impl Into<String>, entries: Vec<GazetteerEntry>) -> Result<Self> {
        let name = name.into();
        let mut exact = HashMap::new();
        let mut normalized = HashMap::new();
        for e in entries {
            let p = GeoPoint::new(e.lat, e.lon)?;
            if exact.insert(e.query.clone(), p).is_some() {
                return Err(Error::Data(format!("gazetteer {name}: duplicate query {:?}", e.query)));
            }
            normalized.entry(normalize_query(&e.query)).or_insert(p);
        }
        Ok(Self { name, exact, normalized })
    }

    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self> {
        Self::new(name, read_jsonl_file(path)?)
    }
}

impl GeoProvider for GazetteerProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn lookup(&self, query: &str) -> Result<Option<GeoPoint>> {
        if let Some(p) = self.exact.get(query) {
            return Ok(Some(*p));
        }
        let key = normalize_query(query);
        if key.is_empty() {
            return Ok(None);
        }
        Ok(self.normalized.get(&key).copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnresolvedReason {
    /// At least one provider had no answer.
    Missing,
    /// Both answered but more than one degree apart on some axis.
    Disagreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Resolution {
    Resolved { point: GeoPoint },
    Unresolved { reason: UnresolvedReason },
}

pub fn agree(a: GeoPoint, b: GeoPoint) -> bool {
    (a.lat - b.lat).abs() <= AGREEMENT_DEGREES && (a.lon - b.lon).abs() <= AGREEMENT_DEGREES
}

/// Accepts provider A's point when both providers answer within one degree
/// on each axis.
pub fn resolve_location(raw: &str, a: &dyn GeoProvider, b: &dyn GeoProvider) -> Result<Resolution> {
    if raw.trim().is_empty() {
        return Ok(Resolution::Unresolved {
            reason: UnresolvedReason::Missing,
        });
    }
    let pa = a.lookup(raw)?;
    let pb = b.lookup(raw)?;
    Ok(match (pa, pb) {
        (Some(pa), Some(pb)) if agree(pa, pb) => Resolution::Resolved { point: pa },
        (Some(_), Some(_)) => Resolution::Unresolved {
            reason: UnresolvedReason::Disagreement,
        },
        _ => Resolution::Unresolved {
            reason: UnresolvedReason::Missing,
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRow {
    query: String,
    #[serde(flatten)]
    resolution: Resolution,
}

/// Resolutions keyed by normalized query; concurrent reads, serialized inserts.
#[derive(Debug, Default)]
pub struct ResolutionCache {
    map: RwLock<BTreeMap<String, Resolution>>,
}

impl ResolutionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, raw: &str) -> Option<Resolution> {
        self.map.read().expect("cache lock").get(&normalize_query(raw)).copied()
    }

    pub fn insert(&self, raw: &str, r: Resolution) {
        self.map.write().expect("cache lock").insert(normalize_query(raw), r);
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resolve(&self, raw: &str, a: &dyn GeoProvider, b: &dyn GeoProvider) -> Result<Resolution> {
        if let Some(r) = self.get(raw) {
            return Ok(r);
        }
        let r = resolve_location(raw, a, b)?;
        self.insert(raw, r);
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<CacheRow> = read_jsonl_file(path)?;
        let cache = Self::new();
        for row in rows {
            cache.insert(&row.query, row.resolution);
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let rows: Vec<CacheRow> = self
            .map
            .read()
            .expect("cache lock")
            .iter()
            .map(|(q, r)| CacheRow {
                query: q.clone(),
                resolution: *r,
            })
            .collect();
        write_jsonl_file(path, &rows)
    }
}

// ---------------------------------------------------------------------------
// regions
// ---------------------------------------------------------------------------

/// Closed ring of (lon, lat) vertices; the first vertex is repeated last.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring(Vec<(f64, f64)>);

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    orient(a, b, p) == 0.0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Outside,
    Boundary,
    Inside,
}

impl Ring {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Data("ring needs at least 3 distinct vertices".into()));
        }
        if points.first() != points.last() {
            return Err(Error::Data("ring is not closed".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::Data("ring has non-finite coordinates".into()));
        }
        let ring = Ring(points);
        ring.check_simple()?;
        Ok(ring)
    }

    fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    fn check_simple(&self) -> Result<()> {
        let e: Vec<_> = self.edges().collect();
        let k = e.len();
        for i in 0..k {
            if e[i].0 == e[i].1 {
                return Err(Error::Data("ring has a repeated vertex".into()));
            }
            for j in i + 1..k {
                let adjacent = j == i + 1 || (i == 0 && j == k - 1);
                if adjacent {
                    // neighbours share one vertex; they may not fold back on each other
                    let (a, b) = e[i];
                    let (c, d) = e[j];
                    let shared = if j == i + 1 { b } else { a };
                    let other_i = if shared == a { b } else { a };
                    let other_j = if shared == c { d } else { c };
                    if on_segment(other_j, a, b) || on_segment(other_i, c, d) {
                        return Err(Error::Data("ring folds back on itself".into()));
                    }
                } else if segments_intersect(e[i].0, e[i].1, e[j].0, e[j].1) {
                    return Err(Error::Data("ring self-intersects".into()));
                }
            }
        }
        Ok(())
    }

    fn side(&self, p: (f64, f64)) -> Side {
        let mut inside = false;
        for (a, b) in self.edges() {
            if on_segment(p, a, b) {
                return Side::Boundary;
            }
            if (a.1 > p.1) != (b.1 > p.1) {
                let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
                if p.0 < x {
                    inside = !inside;
                }
            }
        }
        if inside {
            Side::Inside
        } else {
            Side::Outside
        }
    }
}

/// Outer ring plus optional holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub outer: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    /// Boundaries, including hole boundaries, count as inside.
    pub fn contains(&self, p: GeoPoint) -> bool {
        let q = (p.lon, p.lat);
        match self.outer.side(q) {
            Side::Outside => false,
            Side::Boundary => true,
            Side::Inside => self.holes.iter().all(|h| h.side(q) != Side::Inside),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub code: String,
    pub name: String,
    pub polygons: Vec<Polygon>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTable {
    pub country: String,
    pub entries: Vec<Region>,
}

/// Result of a region lookup; `others` lists later regions that also
/// contained the point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub code: String,
    pub others: Vec<String>,
}

fn coords_ring(v: &Value) -> Result<Ring> {
    let pts = v
        .as_array()
        .ok_or_else(|| Error::Format("ring must be an array".into()))?
        .iter()
        .map(|p| match p.as_array().map(|a| a.as_slice()) {
            Some([lon, lat, ..]) => match (lon.as_f64(), lat.as_f64()) {
                (Some(lon), Some(lat)) => Ok((lon, lat)),
                _ => Err(Error::Format("coordinate must be numeric".into())),
            },
            _ => Err(Error::Format("coordinate must be [lon, lat]".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ring::new(pts)
}

fn coords_polygon(v: &Value) -> Result<Polygon> {
    let rings = v
        .as_array()
        .ok_or_else(|| Error::Format("polygon must be an array of rings".into()))?;
    let mut rings = rings.iter().map(coords_ring);
    let outer = rings
        .next()
        .ok_or_else(|| Error::Format("polygon without rings".into()))??;
    Ok(Polygon {
        outer,
        holes: rings.collect::<Result<_>>()?,
    })
}

impl RegionTable {
    pub fn new(country: impl Into<String>, entries: Vec<Region>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.code.clone()) {
                return Err(Error::Data(format!("duplicate region code {}", e.code)));
            }
            if e.polygons.is_empty() {
                return Err(Error::Data(format!("region {} has no polygon", e.code)));
            }
        }
        Ok(Self {
            country: country.into(),
            entries,
        })
    }

    /// GeoJSON-style FeatureCollection; each feature has `properties.code`,
    /// `properties.name` and a Polygon or MultiPolygon geometry.
    pub fn from_geojson(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::Format(format!("regions: {e}")))?;
        let country = doc.get("country").and_then(Value::as_str).unwrap_or("").to_string();
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format("regions: missing features".into()))?;
        let mut entries = Vec::new();
        for f in features {
            let props = f.get("properties");
            let get = |k: &str| {
                props
                    .and_then(|p| p.get(k))
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Format(format!("regions: feature without properties.{k}")))
            };
            let code = get("code")?;
            let name = get("name")?;
            let geom = f
                .get("geometry")
                .ok_or_else(|| Error::Format(format!("regions: {code} has no geometry")))?;
            let coords = geom
                .get("coordinates")
                .ok_or_else(|| Error::Format(format!("regions: {code} has no coordinates")))?;
            let polygons = match geom.get("type").and_then(Value::as_str) {
                Some("Polygon") => vec![coords_polygon(coords)?],
                Some("MultiPolygon") => coords
                    .as_array()
                    .ok_or_else(|| Error::Format("MultiPolygon must be an array".into()))?
                    .iter()
                    .map(coords_polygon)
                    .collect::<Result<_>>()?,
                other => return Err(Error::Format(format!("regions: unsupported geometry {other:?}"))),
            };
            entries.push(Region { code, name, polygons });
        }
        Self::new(country, entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_geojson(&text)
    }

    pub fn codes(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.code.clone()).collect()
    }

    pub fn assign(&self, p: GeoPoint) -> Option<Assignment> {
        let mut hits = self
            .entries
            .iter()
            .filter(|e| e.polygons.iter().any(|poly| poly.contains(p)))
            .map(|e| e.code.clone());
        let code = hits.next()?;
        Some(Assignment {
            code,
            others: hits.collect(),
        })
    }
}

pub fn assign_region(p: GeoPoint, table: &RegionTable) -> Option<String> {
    table.assign(p).map(|a| a.code)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeoSummary {
    pub users: usize,
    pub resolved: usize,
    pub missing: usize,
    pub disagreement: usize,
    pub outside_regions: usize,
    /// Points that fell in more than one region (first region kept).
    pub ambiguous: usize,
    pub per_region: BTreeMap<String, usize>,
}

/// Sets `region` on every user whose location resolves into the table.
pub fn regionalize_users(
    users: &mut [UserRecord],
    a: &dyn GeoProvider,
    b: &dyn GeoProvider,
    table: &RegionTable,
    cache: &ResolutionCache,
) -> Result<GeoSummary> {
    let mut s = GeoSummary {
        users: users.len(),
        ..GeoSummary::default()
    };
    for u in users.iter_mut() {
        u.region = None;
        match cache.resolve(&u.raw_location, a, b)? {
            Resolution::Unresolved {
                reason: UnresolvedReason::Missing,
            } => s.missing += 1,
            Resolution::Unresolved {
                reason: UnresolvedReason::Disagreement,
            } => s.disagreement += 1,
            Resolution::Resolved { point } => {
                s.resolved += 1;
                match table.assign(point) {
                    None => s.outside_regions += 1,
                    Some(asg) => {
                        if !asg.others.is_empty() {
                            s.ambiguous += 1;
                        }
                        *s.per_region.entry(asg.code.clone()).or_default() += 1;
                        u.region = Some(asg.code);
                    }
                }
            }
        }
    }
    Ok(s)
}

/// Correlates geolocated user counts with census population over the census
/// regions; a region without users counts as zero.
pub fn coverage_correlation(counts: &BTreeMap<String, usize>, census: &BTreeMap<String, f64>) -> Result<CorrelationReport> {
    if let Some(extra) = counts.keys().find(|k| !census.contains_key(*k)) {
        return Err(Error::Data(format!("region {extra} has users but no census value")));
    }
    let x: Vec<f64> = census.keys().map(|k| counts.get(k).copied().unwrap_or(0) as f64).collect();
    let y: Vec<f64> = census.values().copied().collect();
    pearson(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    struct Fixed(Option<GeoPoint>);

    impl GeoProvider for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn lookup(&self, _: &str) -> Result<Option<GeoPoint>> {
            Ok(self.0)
        }
    }

    struct Broken;

    impl GeoProvider for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn lookup(&self, _: &str) -> Result<Option<GeoPoint>> {
            Err(Error::Provider {
                provider: "broken".into(),
                message: "timeout".into(),
            })
        }
    }

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn agreement_rule() {
        let a = Fixed(Some(gp(45.5, -73.6)));
        let b = Fixed(Some(gp(45.6, -73.9)));
        assert_eq!(
            resolve_location("Montreal", &a, &b).unwrap(),
            Resolution::Resolved { point: gp(45.5, -73.6) }
        );
        let far = resolve_location("x", &Fixed(Some(gp(0.0, 0.0))), &Fixed(Some(gp(2.0, 0.0)))).unwrap();
        assert_eq!(
            far,
            Resolution::Unresolved {
                reason: UnresolvedReason::Disagreement
            }
        );
        let missing = resolve_location("x", &a, &Fixed(None)).unwrap();
        assert_eq!(
            missing,
            Resolution::Unresolved {
                reason: UnresolvedReason::Missing
            }
        );
        assert!(matches!(resolve_location("x", &a, &Broken), Err(Error::Provider { .. })));
    }

    #[test]
    fn swapping_providers_keeps_status() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
                rng.random_bool(0.8)
                    .then(|| gp(rng.random_range(40.0..43.0), rng.random_range(-75.0..-72.0)))
            };
            let (a, b) = (Fixed(pick(&mut rng)), Fixed(pick(&mut rng)));
            let ab = resolve_location("q", &a, &b).unwrap();
            let ba = resolve_location("q", &b, &a).unwrap();
            match (ab, ba) {
                (Resolution::Resolved { point: p }, Resolution::Resolved { point: q }) => {
                    assert_eq!(Some(p), a.0);
                    assert_eq!(Some(q), b.0);
                }
                (Resolution::Unresolved { reason: r1 }, Resolution::Unresolved { reason: r2 }) => assert_eq!(r1, r2),
                _ => panic!("status changed after swap"),
            }
        }
    }

    #[test]
    fn gazetteer_lookup() {
        let g = GazetteerProvider::new(
            "g",
            vec![
                GazetteerEntry {
                    query: "Toronto, ON".into(),
                    lat: 43.65,
                    lon: -79.38,
                },
                GazetteerEntry {
                    query: "TORONTO on".into(),
                    lat: 10.0,
                    lon: 10.0,
                },
            ],
        )
        .unwrap();
        assert_eq!(g.lookup("TORONTO on").unwrap(), Some(gp(10.0, 10.0)));
        assert_eq!(g.lookup("  toronto -- on!! ").unwrap(), Some(gp(43.65, -79.38)));
        assert_eq!(g.lookup("Ottawa").unwrap(), None);
        assert_eq!(g.lookup("").unwrap(), None);
        assert!(GeoPoint::new(91.0, 0.0).is_err());
    }

    #[test]
    fn cache_replays() {
        let cache = ResolutionCache::new();
        let a = Fixed(Some(gp(1.0, 1.0)));
        let r = cache.resolve("Somewhere", &a, &a).unwrap();
        // later calls never reach the providers
        assert_eq!(cache.resolve("somewhere!", &Broken, &Broken).unwrap(), r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        cache.save(&path).unwrap();
        let back = ResolutionCache::load(&path).unwrap();
        assert_eq!(back.get("SOMEWHERE"), Some(r));
    }

    fn square(code: &str, x0: f64, y0: f64, size: f64) -> Region {
        let ring = Ring::new(vec![(x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size), (x0, y0)]).unwrap();
        Region {
            code: code.into(),
            name: code.into(),
            polygons: vec![Polygon { outer: ring, holes: vec![] }],
        }
    }

    #[test]
    fn squares() {
        let t = RegionTable::new("T", vec![square("A", 0.0, 0.0, 1.0), square("B", 1.0, 0.0, 1.0)]).unwrap();
        assert_eq!(assign_region(gp(0.5, 0.5), &t).as_deref(), Some("A"));
        assert_eq!(assign_region(gp(0.5, 5.0), &t), None);
        // the shared edge lies in both; first entry wins
        let a = t.assign(gp(0.5, 1.0)).unwrap();
        assert_eq!(a.code, "A");
        assert_eq!(a.others, vec!["B"]);
        assert!(RegionTable::new("T", vec![square("A", 0.0, 0.0, 1.0), square("A", 5.0, 5.0, 1.0)]).is_err());
    }

    #[test]
    fn ring_validation() {
        assert!(Ring::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(Ring::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).is_err());
        // bow tie
        assert!(Ring::new(vec![(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0)]).is_err());
        // spike folding back along an edge
        assert!(Ring::new(vec![(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0)]).is_err());
    }

    #[test]
    fn geojson_and_holes() {
        let text = r#"{"type":"FeatureCollection","country":"T","features":[
          {"type":"Feature","properties":{"code":"D","name":"Donut"},
           "geometry":{"type":"Polygon","coordinates":[[[0,0],[10,0],[10,10],[0,10],[0,0]],[[4,4],[6,4],[6,6],[4,6],[4,4]]]}},
          {"type":"Feature","properties":{"code":"M","name":"Multi"},
           "geometry":{"type":"MultiPolygon","coordinates":[[[[20,0],[21,0],[21,1],[20,0]]],[[[4.5,4.5],[5.5,4.5],[5.5,5.5],[4.5,4.5]]]]}}]}"#;
        let t = RegionTable::from_geojson(text).unwrap();
        assert_eq!(t.codes(), vec!["D", "M"]);
        assert_eq!(assign_region(gp(1.0, 1.0), &t).as_deref(), Some("D"));
        assert_eq!(assign_region(gp(4.2, 5.0), &t), None);
        assert_eq!(assign_region(gp(4.0, 5.0), &t).as_deref(), Some("D"));
        assert_eq!(assign_region(gp(4.6, 5.4), &t).as_deref(), Some("M"));
        assert_eq!(assign_region(gp(0.2, 20.8), &t).as_deref(), Some("M"));
        assert!(RegionTable::from_geojson(r#"{"features":[{"properties":{"code":"x"}}]}"#).is_err());
    }

    // winding number, an independent containment test
    fn winding(ring: &[(f64, f64)], p: (f64, f64)) -> i32 {
        let mut wn = 0;
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
            if a.1 <= p.1 {
                if b.1 > p.1 && cross > 0.0 {
                    wn += 1;
                }
            } else if b.1 <= p.1 && cross < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    #[test]
    fn random_points_match_oracle() {
        let shapes: Vec<Vec<(f64, f64)>> = vec![
            vec![(0.0, 0.0), (4.0, 0.0), (4.0, 3.0), (2.0, 1.5), (0.0, 3.0), (0.0, 0.0)],
            vec![(5.0, 0.0), (9.0, 1.0), (7.0, 4.0), (5.0, 0.0)],
            vec![(1.0, 4.0), (6.0, 4.5), (6.5, 8.0), (3.0, 6.0), (0.5, 8.5), (1.0, 4.0)],
        ];
        let entries = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| Region {
                code: format!("R{i}"),
                name: String::new(),
                polygons: vec![Polygon {
                    outer: Ring::new(s.clone()).unwrap(),
                    holes: vec![],
                }],
            })
            .collect();
        let t = RegionTable::new("T", entries).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p = (rng.random_range(-1.0..10.0), rng.random_range(-1.0..9.0));
            let expected = shapes.iter().position(|s| winding(s, p) != 0).map(|i| format!("R{i}"));
            assert_eq!(assign_region(gp(p.1, p.0), &t), expected, "point {p:?}");
        }
    }

    #[test]
    fn coverage() {
        let census: BTreeMap<String, f64> = [("A", 100.0), ("B", 200.0), ("C", 400.0)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let counts: BTreeMap<String, usize> = [("A", 10), ("B", 20), ("C", 40)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let r = coverage_correlation(&counts, &census).unwrap();
        assert!((r.r - 1.0).abs() < 1e-15);
        let extra: BTreeMap<String, usize> = [("Z".to_string(), 1)].into();
        assert!(coverage_correlation(&extra, &census).is_err());
    }
}
