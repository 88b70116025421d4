//! The bundled interpreter prompt must render, with nothing pinned, to exactly
//! the plain-text form of the LaTeX source kept in `fixtures/`.

use notana_core::prompt::{interpret_prompt, PromptTemplate};

#[path = "support/delatex.rs"]
mod delatex;
use delatex::delatex;

#[test]
fn default_interpreter_prompt_matches_source() {
    let expected = delatex(include_str!("fixtures/interpret_prompt.tex"));
    let rendered = interpret_prompt(&PromptTemplate::interpret_default(), &[]);
    for (i, (a, b)) in rendered.lines().zip(expected.lines()).enumerate() {
        assert_eq!(a, b, "line {}", i + 1);
    }
    assert_eq!(rendered, expected);
}

#[test]
fn oracle_handles_nesting_and_escapes() {
    let src = "\\textbf{A \\& B:}\\par\nx\\_y \\{ z \\}\n\n\\begin{itemize}[leftmargin=*]\n  \\item one\n  \\begin{itemize}\n    \\item two\n  \\end{itemize}\n\\end{itemize}";
    assert_eq!(delatex(src), "A & B:\nx_y { z }\n\n- one\n  - two");
}
