//! Word error rate over isolated-word decisions.

use dualkws::eval::{align, score_utterances};
use dualkws::sim::SILENCE;

fn main() -> dualkws::Result<()> {
    let r = align(&["turn", "on", "the", "light"], &["turn", "the", "night", "off"]);
    println!("sentence: S {} D {} I {} -> WER {:.3}", r.s, r.d, r.i, r.wer);

    let labels = [0, 1, 2, SILENCE, 4];
    let decisions = [Some(0), Some(3), None, Some(5), Some(4)];
    let r = score_utterances(&labels, &decisions)?;
    println!("utterances: S {} D {} I {} C {} N {} -> WER {:.3}", r.s, r.d, r.i, r.c, r.n, r.wer);
    Ok(())
}
