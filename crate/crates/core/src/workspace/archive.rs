//! Plain tar archives of a user's theories: `<activity>/<Name>.thy`.

use std::io::Read;

use super::{TheoryDocument, WorkspaceError};

pub fn write(docs: &[TheoryDocument]) -> Result<Vec<u8>, WorkspaceError> {
    let mut builder = tar::Builder::new(Vec::new());
    for doc in docs {
        let mut header = tar::Header::new_gnu();
        header.set_size(doc.content.len() as u64);
        header.set_mode(0o644);
        header.set_mtime((doc.modified.millis() / 1000).max(0) as u64);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(
            &mut header,
            format!("{}/{}.thy", doc.activity, doc.name),
            doc.content.as_bytes(),
        )?;
    }
    Ok(builder.into_inner()?)
}

/// `(activity, name, content)` for every `.thy` file two levels deep.
pub fn read(bytes: &[u8]) -> Result<Vec<(String, String, String)>, WorkspaceError> {
    let bad = |m: String| WorkspaceError::Archive(m);
    let mut archive = tar::Archive::new(bytes);
    let mut out = Vec::new();
    for entry in archive.entries().map_err(|e| bad(e.to_string()))? {
        let mut entry = entry.map_err(|e| bad(e.to_string()))?;
        if entry.header().entry_type().is_dir() {
            continue;
        }
        let path = entry.path().map_err(|e| bad(e.to_string()))?.into_owned();
        let parts: Vec<String> = path
            .components()
            .filter_map(|c| match c {
                std::path::Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
                _ => None,
            })
            .collect();
        let [activity, file] = parts.as_slice() else {
            return Err(bad(format!("unexpected entry {}", path.display())));
        };
        let Some(name) = file.strip_suffix(".thy") else {
            return Err(bad(format!("{} is not a .thy file", path.display())));
        };
        let mut content = String::new();
        entry
            .read_to_string(&mut content)
            .map_err(|e| bad(format!("{}: {e}", path.display())))?;
        out.push((activity.clone(), name.to_owned(), content));
    }
    Ok(out)
}
