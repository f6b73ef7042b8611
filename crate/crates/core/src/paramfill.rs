//! Filling externally stored parameters into a document.
//!
//! A connection config names each source and carries its location
//! opaquely; values are looked up through [`ParameterSource`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

use crate::model::{Definition, GenericDocument, Param};

#[derive(Debug, Error)]
pub enum FillError {
    #[error("malformed connection config: {0}")]
    Xml(String),
    #[error("connection `{0}` defined twice")]
    DuplicateConnection(String),
    #[error("connection `{0}` has no location")]
    MissingLocation(String),
    #[error("connection element without a name")]
    MissingName,
    #[error("parameter `{name}` refers to unknown connection `{connection}`")]
    UnknownConnection { connection: String, name: String },
    #[error("parameter `{name}` not found in connection `{connection}`")]
    LookupMiss { connection: String, name: String },
    #[error("{path}:{line}: {message}")]
    ParamFile { path: String, line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpec {
    /// `jdbc` for database URLs, `file` otherwise, unless given explicitly.
    pub kind: String,
    pub location: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConnectionConfig {
    pub connections: BTreeMap<String, SourceSpec>,
}

/// Parse an `XSQLConfig` document: one `<connection name>` per source under
/// `<connectiondefs>`, with its location in `<dburl>` or `<location>`.
pub fn parse_connections(xml: &str) -> Result<ConnectionConfig, FillError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| FillError::Xml(e.to_string()))?;
    let mut cfg = ConnectionConfig::default();
    for conn in doc.descendants().filter(|n| n.has_tag_name("connection")) {
        let name = conn.attribute("name").ok_or(FillError::MissingName)?.to_string();
        let child_text = |tag: &str| {
            conn.children()
                .find(|c| c.has_tag_name(tag))
                .and_then(|c| c.text())
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
        };
        let location = child_text("dburl")
            .or_else(|| child_text("location"))
            .or_else(|| conn.attribute("location").map(str::to_string))
            .ok_or_else(|| FillError::MissingLocation(name.clone()))?;
        let kind = conn
            .attribute("kind")
            .map(str::to_string)
            .or_else(|| child_text("kind"))
            .unwrap_or_else(|| if location.starts_with("jdbc:") { "jdbc" } else { "file" }.to_string());
        if cfg.connections.contains_key(&name) {
            return Err(FillError::DuplicateConnection(name));
        }
        cfg.connections.insert(name, SourceSpec { kind, location });
    }
    Ok(cfg)
}

/// Read-only store of named numeric parameters.
pub trait ParameterSource: Send + Sync {
    fn lookup(&self, name: &str) -> Option<f64>;
}

/// In-memory store; also the parsed form of a parameter file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapSource(pub BTreeMap<String, f64>);

impl ParameterSource for MapSource {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

impl MapSource {
    /// Parse `name value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<MapSource, FillError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| FillError::ParamFile {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `name value`, got `{line}`")));
            };
            let v: f64 = value
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("`{value}` is not a number")))?;
            if map.insert(name.to_string(), v).is_some() {
                return Err(err(format!("`{name}` listed twice")));
            }
        }
        Ok(MapSource(map))
    }
}

/// Parameter file on disk, read once when opened.
#[derive(Debug, Clone)]
pub struct FileSource {
    values: MapSource,
}

impl FileSource {
    pub fn open(path: &Path) -> Result<FileSource, FillError> {
        let text = std::fs::read_to_string(path).map_err(|source| FillError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(FileSource {
            values: MapSource::parse(&text, &path.display().to_string())?,
        })
    }
}

impl ParameterSource for FileSource {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.values.lookup(name)
    }
}

/// Replace every connected variable by a plain variable holding the
/// source's value. Nothing else in the document changes.
pub fn fill(
    doc: &GenericDocument,
    config: &ConnectionConfig,
    sources: &HashMap<String, &dyn ParameterSource>,
) -> Result<GenericDocument, FillError> {
    let mut out = doc.clone();
    for def in &mut out.definitions {
        let Definition::Connected(r) = def else { continue };
        let source = config
            .connections
            .get(&r.connection)
            .and(sources.get(&r.connection))
            .ok_or_else(|| FillError::UnknownConnection {
                connection: r.connection.clone(),
                name: r.name.clone(),
            })?;
        let value = source.lookup(&r.name).ok_or_else(|| FillError::LookupMiss {
            connection: r.connection.clone(),
            name: r.name.clone(),
        })?;
        *def = Definition::Var {
            name: r.name.clone(),
            value: Param::Num(value),
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_document;

    const CONFIG: &str = r#"<XSQLConfig>
      <connectiondefs>
        <connection name="demo">
          <username>reader</username>
          <dburl>jdbc:mysql://nova.site.org/NOVA</dburl>
        </connection>
      </connectiondefs>
    </XSQLConfig>"#;

    #[test]
    fn parses_connection_config() {
        let cfg = parse_connections(CONFIG).unwrap();
        assert_eq!(cfg.connections.len(), 1);
        let demo = &cfg.connections["demo"];
        assert_eq!(demo.location, "jdbc:mysql://nova.site.org/NOVA");
        assert_eq!(demo.kind, "jdbc");
    }

    #[test]
    fn config_edge_cases() {
        let empty = parse_connections("<XSQLConfig><connectiondefs/></XSQLConfig>").unwrap();
        assert!(empty.connections.is_empty());
        let dup = r#"<XSQLConfig><connectiondefs>
            <connection name="demo"><dburl>a</dburl></connection>
            <connection name="demo"><dburl>b</dburl></connection>
        </connectiondefs></XSQLConfig>"#;
        assert!(matches!(parse_connections(dup), Err(FillError::DuplicateConnection(n)) if n == "demo"));
        let missing = r#"<XSQLConfig><connectiondefs><connection name="x"/></connectiondefs></XSQLConfig>"#;
        assert!(matches!(parse_connections(missing), Err(FillError::MissingLocation(_))));
    }

    fn demo_doc() -> GenericDocument {
        parse_document(r#"<AGDD version="v6"><var connection="demo" name="SCT.length"/><var name="half" value="SCT.length/2"/></AGDD>"#)
            .unwrap()
            .document
    }

    #[test]
    fn fills_connected_value() {
        let cfg = parse_connections(CONFIG).unwrap();
        let src = MapSource::parse("# nova export\nSCT.length 123.456\n", "mem").unwrap();
        let sources = HashMap::from([("demo".to_string(), &src as &dyn ParameterSource)]);
        let filled = fill(&demo_doc(), &cfg, &sources).unwrap();
        assert!(filled.unresolved_params().is_empty());
        assert!(filled
            .to_xml()
            .contains(r#"<var name="SCT.length" value="123.456"/>"#));
        assert_eq!(fill(&filled, &cfg, &sources).unwrap(), filled);
        assert_eq!(filled.definitions[1], demo_doc().definitions[1]);
    }

    #[test]
    fn fill_errors_name_the_parameter() {
        let cfg = parse_connections(CONFIG).unwrap();
        let src = MapSource::default();
        let sources = HashMap::from([("demo".to_string(), &src as &dyn ParameterSource)]);
        let doc = parse_document(r#"<AGDD><var connection="demo" name="missing.key"/></AGDD>"#)
            .unwrap()
            .document;
        let e = fill(&doc, &cfg, &sources).unwrap_err();
        assert!(e.to_string().contains("missing.key"));
        let doc = parse_document(r#"<AGDD><var connection="other" name="k"/></AGDD>"#).unwrap().document;
        assert!(matches!(fill(&doc, &cfg, &sources), Err(FillError::UnknownConnection { .. })));
        let plain = parse_document(r#"<AGDD><box name="b" x="1" y="1" z="1"/></AGDD>"#).unwrap().document;
        assert_eq!(fill(&plain, &ConnectionConfig::default(), &HashMap::new()).unwrap(), plain);
    }

    #[test]
    fn param_file_errors_have_line_numbers() {
        let e = MapSource::parse("a 1\nb\n", "p.txt").unwrap_err();
        assert_eq!(e.to_string(), "p.txt:2: expected `name value`, got `b`");
        assert!(MapSource::parse("a x", "p").is_err());
    }
}
