//! Test-side LaTeX-to-text oracle for the bundled interpreter prompt.

/// Minimal LaTeX-to-text conversion covering the constructs in the fixture:
/// bold runs, `\par`, nested itemize lists and escaped specials.
pub fn delatex(src: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    let mut depth = 0usize;
    for raw in src.lines() {
        let line = raw.trim();
        if line.is_empty() {
            if lines.last().is_some_and(|l| !l.is_empty()) {
                lines.push(String::new());
            }
            continue;
        }
        if line.starts_with("\\begin{itemize}") {
            depth += 1;
            continue;
        }
        if line.starts_with("\\end{itemize}") {
            depth -= 1;
            continue;
        }
        let text = match line.strip_prefix("\\item ") {
            Some(rest) => format!("{}- {}", "  ".repeat(depth - 1), inline(rest)),
            None => inline(line),
        };
        lines.push(text);
    }
    while lines.last().is_some_and(String::is_empty) {
        lines.pop();
    }
    lines.join("\n")
}

fn inline(s: &str) -> String {
    let mut out = String::new();
    let mut rest = s;
    while let Some(pos) = rest.find("\\textbf{") {
        out.push_str(&rest[..pos]);
        let body = &rest[pos + "\\textbf{".len()..];
        let close = closing_brace(body);
        out.push_str(&body[..close]);
        rest = &body[close + 1..];
    }
    out.push_str(rest);
    let out = out.strip_suffix("\\par").unwrap_or(&out).to_string();
    out.replace("\\_", "_")
        .replace("\\&", "&")
        .replace("\\{", "{")
        .replace("\\}", "}")
}

fn closing_brace(s: &str) -> usize {
    let bytes = s.as_bytes();
    let mut level = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 1,
            b'{' => level += 1,
            b'}' if level == 0 => return i,
            b'}' => level -= 1,
            _ => {}
        }
        i += 1;
    }
    panic!("unbalanced braces in fixture");
}
