//! Bridge to an external decoder that turns a real video file into a bundle
//! directory. The command is a template; `{input}` and `{out}` are replaced
//! with shell-quoted paths and the result is run through `sh -c`.

use super::{load_bundle, MediaError, SfvBundle};
use std::path::Path;
use std::process::Command;

pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

pub fn render_command(template: &str, input: &Path, out: &Path) -> String {
    template
        .replace("{input}", &shell_quote(&input.to_string_lossy()))
        .replace("{out}", &shell_quote(&out.to_string_lossy()))
}

/// Runs the decoder and validates what it wrote.
pub fn run_decoder(template: &str, input: &Path, out: &Path) -> Result<SfvBundle, MediaError> {
    if template.trim().is_empty() {
        return Err(MediaError::Decoder(
            "no decoder command configured; set ingest.decoder_command in the config".into(),
        ));
    }
    std::fs::create_dir_all(out)?;
    let cmd = render_command(template, input, out);
    let output = Command::new("sh").arg("-c").arg(&cmd).output()?;
    if !output.status.success() {
        return Err(MediaError::Decoder(format!(
            "`{cmd}` exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    load_bundle(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting_survives_spaces_and_quotes() {
        let cmd = render_command("dec {input} -o {out}", Path::new("a b.mp4"), Path::new("it's"));
        assert_eq!(cmd, r#"dec 'a b.mp4' -o 'it'\''s'"#);
    }

    #[test]
    fn empty_template_is_actionable() {
        let err = run_decoder("", Path::new("x"), Path::new("y")).unwrap_err();
        assert!(err.to_string().contains("decoder_command"));
    }

    #[test]
    fn nonzero_exit_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_decoder("echo boom >&2; exit 3", Path::new("x"), dir.path()).unwrap_err();
        assert!(matches!(err, MediaError::Decoder(ref m) if m.contains("boom")));
    }
}
