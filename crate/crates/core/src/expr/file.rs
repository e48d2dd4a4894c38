//! Expression files: a header line `mode=<pair|symmetric> max_length=<n>
//! [extensions=a,b]`, then one pre-order expression per line. Lines starting
//! with `#` are comments.

use std::fs;
use std::path::Path;

use super::library::{Extension, LibraryMode, TokenLibrary};
use super::tree::ExprTree;
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub fn header_line(lib: &TokenLibrary) -> String {
    let mut s = format!("mode={} max_length={}", lib.mode().as_str(), lib.max_length());
    if !lib.extensions().is_empty() {
        let exts: Vec<&str> = lib.extensions().iter().map(|e| e.as_str()).collect();
        s.push_str(&format!(" extensions={}", exts.join(",")));
    }
    s
}

pub fn parse_header(line: &str) -> Result<TokenLibrary> {
    let mut mode = None;
    let mut max_length = None;
    let mut exts = Vec::new();
    for field in line.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("malformed header field `{field}`")))?;
        match k {
            "mode" => mode = Some(LibraryMode::parse(v)?),
            "max_length" => {
                max_length = Some(
                    v.parse::<usize>().map_err(|_| Error::Config(format!("bad max_length `{v}`")))?,
                )
            }
            "extensions" => {
                for e in v.split(',').filter(|e| !e.is_empty()) {
                    exts.push(Extension::parse(e)?);
                }
            }
            other => return Err(Error::Config(format!("unknown header key `{other}`"))),
        }
    }
    let mode = mode.ok_or_else(|| Error::Config("header lacks mode".into()))?;
    let max_length = max_length.ok_or_else(|| Error::Config("header lacks max_length".into()))?;
    TokenLibrary::with_extensions(mode, max_length, &exts)
}

pub fn format_expressions(lib: &TokenLibrary, exprs: &[ExprTree], comments: &[String]) -> String {
    let mut out = header_line(lib);
    out.push('\n');
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    for e in exprs {
        out.push_str(&e.prefix_string());
        out.push('\n');
    }
    out
}

pub fn write_expressions(
    path: &Path,
    lib: &TokenLibrary,
    exprs: &[ExprTree],
    comments: &[String],
) -> Result<()> {
    write_atomic(path, format_expressions(lib, exprs, comments).as_bytes())?;
    Ok(())
}

pub fn parse_expressions(text: &str) -> Result<(TokenLibrary, Vec<ExprTree>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty expression file".into()))?;
    let lib = parse_header(header)?;
    let mut exprs = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        exprs.push(ExprTree::parse_symbols(line, &lib)?);
    }
    Ok((lib, exprs))
}

pub fn read_expressions(path: &Path) -> Result<(TokenLibrary, Vec<ExprTree>)> {
    let text = fs::read_to_string(path)?;
    parse_expressions(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })
}
