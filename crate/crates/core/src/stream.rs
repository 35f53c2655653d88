//! Line-oriented stream files: `item<delim>quantity` per line.
//!
//! The quantity defaults to `+1` when the field is absent, blank lines and
//! lines starting with `#` are skipped, and surrounding whitespace is
//! trimmed from both fields.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sketch::StreamElement;

pub const DEFAULT_DELIMITER: char = ',';

/// Parses one line; `Ok(None)` for blank and comment lines.
pub fn parse_record(line: &str, delimiter: char, line_no: usize) -> Result<Option<StreamElement>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let mut fields = line.splitn(3, delimiter);
    let item = fields.next().unwrap_or("").trim();
    if item.is_empty() {
        return Err(err("empty item token".into()));
    }
    let delta = match fields.next() {
        None => 1.0,
        Some(q) => {
            let q = q.trim();
            let v: f64 = q
                .parse()
                .map_err(|_| err(format!("quantity {q:?} is not a number")))?;
            if !v.is_finite() {
                return Err(err(format!("quantity {q:?} is not finite")));
            }
            v
        }
    };
    if fields.next().is_some() {
        return Err(err(format!(
            "more than two fields (delimiter {delimiter:?})"
        )));
    }
    Ok(Some(StreamElement::new(item, delta)))
}

/// Reads records one line at a time.
pub struct StreamReader<R> {
    inner: R,
    delimiter: char,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(inner: R, delimiter: char) -> Self {
        Self {
            inner,
            delimiter,
            line_no: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<StreamElement>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            match parse_record(&self.buf, self.delimiter, self.line_no) {
                Ok(None) => continue,
                Ok(Some(e)) => return Some(Ok(e)),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

pub fn write_record<W: Write>(out: &mut W, element: &StreamElement, delimiter: char) -> Result<()> {
    out.write_all(element.item.as_bytes())?;
    writeln!(out, "{delimiter}{}", element.delta)?;
    Ok(())
}
