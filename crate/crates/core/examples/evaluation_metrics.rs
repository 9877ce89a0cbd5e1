//! Category accuracy under the best label matching, and boundary scores for
//! segmentations of strings that may differ.

use serket::metrics::{matched_accuracy, phoneme_accuracy, seg_eval};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = [0, 0, 1, 1, 2, 2];
    let pred = [2, 2, 0, 0, 1, 0];
    let m = matched_accuracy(&truth, &pred)?;
    println!("accuracy {:.3}, permutation {:?}", m.accuracy, m.permutation);
    print!("{}", m.confusion.aligned(&m.permutation).render());

    // "A|BC|D" against "A|A|CD"
    let r = seg_eval(&[1, 3], &[1, 2], "ABCD", "AACD")?;
    println!(
        "\nTP {} FP {} FN {} TN {}  P {:.3} R {:.3} F {:.3}",
        r.n_tp, r.n_fp, r.n_fn, r.n_tn, r.precision, r.recall, r.f_measure
    );
    println!("phoneme accuracy {:.3}", phoneme_accuracy("kamone", "kamane")?);
    Ok(())
}
