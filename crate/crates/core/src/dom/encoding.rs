use std::sync::OnceLock;

use encoding_rs::{Encoding, UTF_8};
use regex::bytes::Regex;

use super::DomError;

const PRESCAN_BYTES: usize = 1024;

fn meta_charset() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)<meta[^>]*?charset\s*=\s*["']?\s*([A-Za-z0-9_:.\-]+)"#).unwrap()
    })
}

/// Picks the document encoding: explicit hint, then byte-order mark, then a
/// `<meta charset>` prescan of the first kilobyte, then UTF-8.
fn detect(body: &[u8], hint: Option<&str>) -> Result<(&'static Encoding, usize), DomError> {
    if let Some(label) = hint.map(str::trim).filter(|l| !l.is_empty()) {
        let enc = Encoding::for_label(label.as_bytes())
            .ok_or_else(|| DomError::Encoding(label.to_string()))?;
        let bom = Encoding::for_bom(body)
            .filter(|(b, _)| *b == enc)
            .map_or(0, |(_, n)| n);
        return Ok((enc, bom));
    }
    if let Some((enc, len)) = Encoding::for_bom(body) {
        return Ok((enc, len));
    }
    let head = &body[..body.len().min(PRESCAN_BYTES)];
    if let Some(caps) = meta_charset().captures(head) {
        if let Some(enc) = Encoding::for_label(&caps[1]) {
            // A meta tag cannot truthfully declare a UTF-16 document it is written in ASCII.
            let enc = if enc == encoding_rs::UTF_16LE || enc == encoding_rs::UTF_16BE {
                UTF_8
            } else {
                enc
            };
            return Ok((enc, 0));
        }
        log::debug!(
            "ignoring unknown meta charset {:?}",
            String::from_utf8_lossy(&caps[1])
        );
    }
    Ok((UTF_8, 0))
}

/// Decodes a response body to text, failing on malformed byte sequences.
pub fn decode_body(body: &[u8], hint: Option<&str>) -> Result<String, DomError> {
    let (enc, bom) = detect(body, hint)?;
    enc.decode_without_bom_handling_and_without_replacement(&body[bom..])
        .map(|s| s.into_owned())
        .ok_or_else(|| DomError::Encoding(enc.name().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utf8_default() {
        assert_eq!(decode_body("héllo".as_bytes(), None).unwrap(), "héllo");
    }

    #[test]
    fn bom_is_stripped() {
        let mut body = vec![0xEF, 0xBB, 0xBF];
        body.extend_from_slice(b"<p>x</p>");
        assert_eq!(decode_body(&body, None).unwrap(), "<p>x</p>");
    }

    #[test]
    fn hint_overrides_detection() {
        let body = [b'<', b'p', b'>', 0xE9, b'<', b'/', b'p', b'>'];
        assert_eq!(decode_body(&body, Some("iso-8859-1")).unwrap(), "<p>é</p>");
    }

    #[test]
    fn meta_charset_is_honoured() {
        let mut body = b"<meta charset=\"windows-1252\"><p>".to_vec();
        body.push(0x80);
        assert!(decode_body(&body, None).unwrap().ends_with('€'));
    }

    #[test]
    fn invalid_utf8_is_an_error() {
        let body = [b'<', b'p', b'>', 0xFF, 0xFE, 0xFD];
        assert!(matches!(
            decode_body(&body[..], Some("utf-8")),
            Err(DomError::Encoding(_))
        ));
        assert!(matches!(
            decode_body(&body[..], None),
            Err(DomError::Encoding(_))
        ));
    }

    #[test]
    fn unknown_hint_is_an_error() {
        assert!(matches!(
            decode_body(b"<p>", Some("klingon")),
            Err(DomError::Encoding(_))
        ));
    }
}
