//! Note preprocessing, vocabulary with a document-frequency floor, tf-idf
//! vectors and fusion with a structured row.

use mortality::textfeat::{build_vocab, fuse, preprocess_note, tfidf_fit, StopWords};

fn main() -> mortality::Result<()> {
    let notes = [
        "Pt [**Name 123**] intubated overnight, on levophed. Lactic 4.2, remains hypotensive.",
        "Patient alert and oriented, tolerating diet, ambulating. Stable, afebrile.",
        "Intubated; pressors weaned. Alert when sedation held.",
        "Family meeting held; DNR/DNI, CMO discussed. Hypotensive despite pressors.",
    ];
    let stop = StopWords::default_list();
    let docs: Vec<Vec<String>> = notes.iter().map(|n| preprocess_note(n, &stop)).collect();
    for d in &docs {
        println!("{d:?}");
    }

    let vocab = build_vocab(&docs, 2)?;
    println!("\nvocabulary (df >= 2): {:?}", vocab.tokens());
    let tfidf = tfidf_fit(&vocab);
    for (t, idf) in vocab.tokens().iter().zip(tfidf.idf()) {
        println!("  idf({t}) = {idf:.3}");
    }

    let v = tfidf.transform(&docs[3]);
    println!("\nnote 4 tf-idf: {:?} (norm {:.3})", v.iter().collect::<Vec<_>>(), v.norm());
    let fused = fuse(&[0.5, 0.0, -1.2], &v);
    println!("fused with a 3-column structured row: dim {} nnz {}", fused.dim(), fused.nnz());
    Ok(())
}
