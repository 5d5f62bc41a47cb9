//! The XML forms.
//!
//! The legacy form follows RFC 8182 with one `publish` element per object
//! and a full URI each. The improved form groups objects under a `ca`
//! element that carries the repository URI once. Parsing refuses DTDs,
//! processing instructions, CDATA and anything but the predefined entities.

use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::*;

const LEGACY_VERSION: &str = "1";
const IMPROVED_VERSION: &str = "2";

fn version(improved: bool) -> &'static str {
    if improved {
        IMPROVED_VERSION
    } else {
        LEGACY_VERSION
    }
}

fn err(msg: impl Into<String>) -> RrdpError {
    RrdpError::Xml(msg.into())
}

//------------ Encoding -------------------------------------------------------

fn open_root(out: &mut String, root: &str, version: &str, session: &str, serial: u64) {
    let _ = write!(
        out,
        r#"<{root} xmlns="{NAMESPACE}" version="{version}" session_id="{}" serial="{serial}">"#,
        escape(session)
    );
}

fn base64_into(out: &mut String, content: &[u8]) {
    STANDARD.encode_string(content, out);
}

pub fn encode_notification(n: &Notification) -> Vec<u8> {
    let mut out = String::new();
    open_root(&mut out, "notification", LEGACY_VERSION, &n.session_id, n.serial);
    let _ = write!(out, r#"<snapshot uri="{}" hash="{}"/>"#, escape(&n.snapshot.uri), hex_hash(&n.snapshot.hash));
    for d in &n.deltas {
        let _ = write!(out, r#"<delta serial="{}" uri="{}" hash="{}"/>"#, d.serial, escape(&d.uri), hex_hash(&d.hash));
    }
    out.push_str("</notification>");
    out.into_bytes()
}

pub fn encode_snapshot(s: &Snapshot, improved: bool) -> Vec<u8> {
    let size: usize = s.cas.iter().flat_map(|c| &c.entries).map(|e| e.content.len() * 4 / 3 + 120).sum();
    let mut out = String::with_capacity(size + 200);
    open_root(&mut out, "snapshot", version(improved), &s.session_id, s.serial);
    for ca in &s.cas {
        let repo = escape(&ca.repo_uri);
        if improved {
            let _ = write!(out, r#"<ca repo="{repo}">"#);
        }
        for e in &ca.entries {
            if improved {
                let _ = write!(out, r#"<publish name="{}">"#, escape(&e.name));
            } else {
                let _ = write!(out, r#"<publish uri="{repo}{}">"#, escape(&e.name));
            }
            base64_into(&mut out, &e.content);
            out.push_str("</publish>");
        }
        if improved {
            out.push_str("</ca>");
        }
    }
    out.push_str("</snapshot>");
    out.into_bytes()
}

pub fn encode_delta(d: &Delta, improved: bool) -> Vec<u8> {
    let mut out = String::new();
    open_root(&mut out, "delta", version(improved), &d.session_id, d.serial);
    for ca in &d.cas {
        let repo = escape(&ca.repo_uri);
        let target = |name: &str| {
            if improved {
                format!(r#"name="{}""#, escape(name))
            } else {
                format!(r#"uri="{repo}{}""#, escape(name))
            }
        };
        if improved {
            let _ = write!(out, r#"<ca repo="{repo}">"#);
        }
        for p in &ca.modified {
            let _ = write!(out, "<publish {}", target(&p.name));
            if let Some(h) = &p.hash {
                let _ = write!(out, r#" hash="{}""#, hex_hash(h));
            }
            out.push('>');
            base64_into(&mut out, &p.content);
            out.push_str("</publish>");
        }
        for w in &ca.withdrawn {
            let _ = write!(out, r#"<withdraw {} hash="{}"/>"#, target(&w.name), hex_hash(&w.hash));
        }
        if improved {
            out.push_str("</ca>");
        }
    }
    out.push_str("</delta>");
    out.into_bytes()
}

//------------ Parsing --------------------------------------------------------

#[derive(Debug, Default)]
struct Elem {
    name: String,
    attrs: Vec<(String, String)>,
    text: String,
    children: Vec<Elem>,
}

impl Elem {
    fn from_start(s: &BytesStart) -> Result<Self, RrdpError> {
        let name = String::from_utf8(s.name().as_ref().to_vec()).map_err(|_| err("element name"))?;
        let mut attrs = Vec::new();
        for a in s.attributes() {
            let a = a.map_err(|e| err(e.to_string()))?;
            let key = String::from_utf8(a.key.as_ref().to_vec()).map_err(|_| err("attribute name"))?;
            let value = a.unescape_value().map_err(|e| err(e.to_string()))?.into_owned();
            attrs.push((key, value));
        }
        Ok(Elem { name, attrs, ..Default::default() })
    }

    fn expect(&self, name: &str, allowed: &[&str]) -> Result<(), RrdpError> {
        if self.name != name {
            return Err(err(format!("expected <{name}>, found <{}>", self.name)));
        }
        if let Some((k, _)) = self.attrs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(err(format!("unexpected attribute {k} on <{name}>")));
        }
        Ok(())
    }

    fn opt_attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn attr(&self, key: &str) -> Result<&str, RrdpError> {
        self.opt_attr(key).ok_or_else(|| err(format!("<{}> lacks {key}", self.name)))
    }

    fn leaf(&self) -> Result<(), RrdpError> {
        if !self.children.is_empty() {
            return Err(err(format!("<{}> must not have children", self.name)));
        }
        Ok(())
    }

    fn no_text(&self) -> Result<(), RrdpError> {
        if !self.text.is_empty() {
            return Err(err(format!("unexpected text in <{}>", self.name)));
        }
        Ok(())
    }

    fn content(&self) -> Result<Vec<u8>, RrdpError> {
        self.leaf()?;
        let compact: Vec<u8> = self.text.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
        STANDARD.decode(compact).map_err(|_| RrdpError::Base64)
    }
}

fn parse_tree(data: &[u8]) -> Result<Elem, RrdpError> {
    let text = std::str::from_utf8(data).map_err(|_| err("not UTF-8"))?;
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Elem> = Vec::new();
    let mut root: Option<Elem> = None;
    let mut seen_any = false;
    loop {
        let event = reader.read_event().map_err(|e| err(e.to_string()))?;
        let closed = match event {
            Event::Decl(_) if !seen_any => None,
            Event::Start(s) => {
                stack.push(Elem::from_start(&s)?);
                None
            }
            Event::Empty(s) => Some(Elem::from_start(&s)?),
            Event::End(_) => Some(stack.pop().ok_or_else(|| err("unbalanced end tag"))?),
            Event::Text(t) => {
                let cur = stack.last_mut().ok_or_else(|| err("text outside the root element"))?;
                cur.text.push_str(&t.unescape().map_err(|e| err(e.to_string()))?);
                None
            }
            Event::Comment(_) => None,
            Event::Eof => break,
            Event::DocType(_) => return Err(err("DTDs are not allowed")),
            Event::PI(_) => return Err(err("processing instructions are not allowed")),
            Event::CData(_) => return Err(err("CDATA is not allowed")),
            Event::Decl(_) => return Err(err("misplaced XML declaration")),
        };
        seen_any = true;
        if let Some(elem) = closed {
            match stack.last_mut() {
                Some(parent) => parent.children.push(elem),
                None if root.is_none() => root = Some(elem),
                None => return Err(err("more than one root element")),
            }
        }
    }
    if !stack.is_empty() {
        return Err(err("truncated document"));
    }
    root.ok_or_else(|| err("no root element"))
}

fn parse_serial(s: &str) -> Result<u64, RrdpError> {
    match s.parse::<u64>() {
        Ok(v) if v.to_string() == s => Ok(v),
        _ => Err(err(format!("bad serial {s:?}"))),
    }
}

/// Checks the root element and returns session and serial.
fn header(root: &Elem, name: &str, version: &str) -> Result<(String, u64), RrdpError> {
    root.expect(name, &["xmlns", "version", "session_id", "serial"])?;
    root.no_text()?;
    if root.attr("xmlns")? != NAMESPACE {
        return Err(err("wrong namespace"));
    }
    if root.attr("version")? != version {
        return Err(err(format!("unsupported version {:?}", root.attr("version")?)));
    }
    Ok((root.attr("session_id")?.to_string(), parse_serial(root.attr("serial")?)?))
}

/// Splits a legacy object URI into repository and name.
fn split_uri(uri: &str) -> Result<(&str, &str), RrdpError> {
    match uri.rfind('/') {
        Some(i) if i + 1 < uri.len() => Ok((&uri[..=i], &uri[i + 1..])),
        _ => Err(RrdpError::Name(uri.to_string())),
    }
}

/// Regroups flat legacy elements by repository. Elements of one
/// repository must be adjacent; ordering is checked by the caller.
fn group_legacy<T>(items: impl Iterator<Item = Result<(String, T), RrdpError>>) -> Result<Vec<(String, Vec<T>)>, RrdpError> {
    let mut groups: Vec<(String, Vec<T>)> = Vec::new();
    for item in items {
        let (repo, value) = item?;
        match groups.last_mut() {
            Some((r, values)) if *r == repo => values.push(value),
            _ => groups.push((repo, vec![value])),
        }
    }
    Ok(groups)
}

pub fn decode_notification(data: &[u8]) -> Result<Notification, RrdpError> {
    let root = parse_tree(data)?;
    let (session_id, serial) = header(&root, "notification", LEGACY_VERSION)?;
    let mut children = root.children.iter();
    let snap = children.next().ok_or_else(|| err("missing snapshot reference"))?;
    snap.expect("snapshot", &["uri", "hash"])?;
    snap.leaf()?;
    snap.no_text()?;
    let snapshot = SnapshotRef { uri: snap.attr("uri")?.to_string(), hash: parse_hex_hash(snap.attr("hash")?)? };
    let deltas = children
        .map(|d| {
            d.expect("delta", &["serial", "uri", "hash"])?;
            d.leaf()?;
            d.no_text()?;
            Ok(DeltaRef {
                serial: parse_serial(d.attr("serial")?)?,
                uri: d.attr("uri")?.to_string(),
                hash: parse_hex_hash(d.attr("hash")?)?,
            })
        })
        .collect::<Result<_, RrdpError>>()?;
    Ok(Notification { session_id, serial, snapshot, deltas })
}

pub fn decode_snapshot(data: &[u8], improved: bool) -> Result<Snapshot, RrdpError> {
    let root = parse_tree(data)?;
    let (session_id, serial) = header(&root, "snapshot", version(improved))?;
    let cas = if improved {
        root.children
            .iter()
            .map(|ca| {
                ca.expect("ca", &["repo"])?;
                ca.no_text()?;
                let entries = ca
                    .children
                    .iter()
                    .map(|p| {
                        p.expect("publish", &["name"])?;
                        Ok(SnapshotEntry { name: p.attr("name")?.to_string(), content: p.content()? })
                    })
                    .collect::<Result<_, RrdpError>>()?;
                Ok(SnapshotCa { repo_uri: ca.attr("repo")?.to_string(), entries })
            })
            .collect::<Result<_, RrdpError>>()?
    } else {
        let items = root.children.iter().map(|p| {
            p.expect("publish", &["uri"])?;
            let (repo, name) = split_uri(p.attr("uri")?)?;
            Ok((repo.to_string(), SnapshotEntry { name: name.to_string(), content: p.content()? }))
        });
        group_legacy(items)?
            .into_iter()
            .map(|(repo_uri, entries)| SnapshotCa { repo_uri, entries })
            .collect()
    };
    Ok(Snapshot { session_id, serial, cas })
}

enum Change {
    Publish(Publish),
    Withdraw(Withdraw),
}

fn parse_change(e: &Elem, target: &str) -> Result<(String, Change), RrdpError> {
    let name = e.attr(target)?.to_string();
    match e.name.as_str() {
        "publish" => {
            e.expect("publish", &[target, "hash"])?;
            let hash = e.opt_attr("hash").map(parse_hex_hash).transpose()?;
            let content = e.content()?;
            Ok((name.clone(), Change::Publish(Publish { name, hash, content })))
        }
        _ => {
            e.expect("withdraw", &[target, "hash"])?;
            e.leaf()?;
            e.no_text()?;
            let hash = parse_hex_hash(e.attr("hash")?)?;
            Ok((name.clone(), Change::Withdraw(Withdraw { name, hash })))
        }
    }
}

fn delta_ca(repo_uri: String, changes: Vec<Change>) -> Result<DeltaCa, RrdpError> {
    let mut ca = DeltaCa { repo_uri, modified: Vec::new(), withdrawn: Vec::new() };
    for c in changes {
        match c {
            Change::Publish(p) => {
                if !ca.withdrawn.is_empty() {
                    return Err(err("publish after withdraw within one repository"));
                }
                ca.modified.push(p)
            }
            Change::Withdraw(w) => ca.withdrawn.push(w),
        }
    }
    Ok(ca)
}

pub fn decode_delta(data: &[u8], improved: bool) -> Result<Delta, RrdpError> {
    let root = parse_tree(data)?;
    let (session_id, serial) = header(&root, "delta", version(improved))?;
    let cas = if improved {
        root.children
            .iter()
            .map(|ca| {
                ca.expect("ca", &["repo"])?;
                ca.no_text()?;
                let changes =
                    ca.children.iter().map(|e| parse_change(e, "name").map(|(_, c)| c)).collect::<Result<_, _>>()?;
                delta_ca(ca.attr("repo")?.to_string(), changes)
            })
            .collect::<Result<_, RrdpError>>()?
    } else {
        let parsed: Vec<(String, Change)> =
            root.children.iter().map(|e| parse_change(e, "uri")).collect::<Result<_, _>>()?;
        let items = parsed.into_iter().map(|(uri, change)| {
            let (repo, name) = split_uri(&uri)?;
            let (repo, name) = (repo.to_string(), name.to_string());
            let change = match change {
                Change::Publish(p) => Change::Publish(Publish { name, ..p }),
                Change::Withdraw(w) => Change::Withdraw(Withdraw { name, ..w }),
            };
            Ok((repo, change))
        });
        group_legacy(items)?
            .into_iter().map(|(repo, changes)| delta_ca(repo, changes)).collect::<Result<_, _>>()?
    };
    Ok(Delta { session_id, serial, cas })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SESSION: &str = "9df4b597-af9e-4dca-bdda-719cce2c4e28";

    #[test]
    fn legacy_snapshot_shape() {
        let s = Snapshot::from_objects(SESSION.into(), 3, [("rsync://h/r/".into(), "a.roa".into(), b"hi".to_vec())]);
        let xml = String::from_utf8(encode_snapshot(&s, false)).unwrap();
        assert_eq!(
            xml,
            format!(
                r#"<snapshot xmlns="{NAMESPACE}" version="1" session_id="{SESSION}" serial="3"><publish uri="rsync://h/r/a.roa">aGk=</publish></snapshot>"#
            )
        );
        assert_eq!(decode_snapshot(xml.as_bytes(), false).unwrap(), s);
    }

    #[test]
    fn rejects_hostile_xml() {
        let bomb = format!(
            r#"<?xml version="1.0"?><!DOCTYPE s [<!ENTITY a "aaaa">]><snapshot xmlns="{NAMESPACE}" version="1" session_id="{SESSION}" serial="1">&a;</snapshot>"#
        );
        assert!(decode_snapshot(bomb.as_bytes(), false).is_err());
        let pi = format!(r#"<?xml version="1.0"?><?evil x?><snapshot xmlns="{NAMESPACE}" version="1" session_id="{SESSION}" serial="1"/>"#);
        assert!(decode_snapshot(pi.as_bytes(), false).is_err());
        let entity = format!(r#"<snapshot xmlns="{NAMESPACE}" version="1" session_id="{SESSION}" serial="1">&foo;</snapshot>"#);
        assert!(decode_snapshot(entity.as_bytes(), false).is_err());
    }

    #[test]
    fn whitespace_between_elements_is_ignored() {
        let xml = format!(
            "<snapshot xmlns=\"{NAMESPACE}\" version=\"2\" session_id=\"{SESSION}\" serial=\"1\">\n  <ca repo=\"rsync://h/r/\">\n    <publish name=\"a.roa\">\n aGk=\n </publish>\n  </ca>\n</snapshot>\n"
        );
        let s = decode_snapshot(xml.as_bytes(), true).unwrap();
        assert_eq!(s.cas[0].entries[0].content, b"hi");
    }

    #[test]
    fn uppercase_hashes_rejected() {
        let upper = "AB".repeat(32);
        assert!(parse_hex_hash(&upper).is_err());
        assert!(parse_hex_hash(&"ab".repeat(32)).is_ok());
    }
}
