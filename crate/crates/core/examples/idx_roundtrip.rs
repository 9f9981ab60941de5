//! Writes a few synthetic digits as IDX files, reads them back, and draws
//! one as ASCII art.

use cadam::data::{self, DIGIT_SIDE};

fn main() -> cadam::Result<()> {
    let digits = data::synthetic_digits(20, 7)?;
    let dir = std::env::temp_dir().join("cadam-idx-example");
    std::fs::create_dir_all(&dir)?;
    let (images, labels) = (dir.join("images.idx3"), dir.join("labels.idx1"));
    data::write_idx(&digits, DIGIT_SIDE, DIGIT_SIDE, &images, &labels)?;

    let back = data::load_idx(&images, &labels)?;
    println!("{} images, {} features, class counts {:?}", back.n(), back.d(), back.class_counts());
    // IDX stores bytes, so values survive exactly only because the
    // generator already quantizes to k/255
    println!("round trip exact: {}", back.features() == digits.features());

    println!("label {}", back.label(0));
    for row in back.row(0).chunks(DIGIT_SIDE) {
        let line: String = row.iter().map(|&p| if p > 0.5 { '#' } else if p > 0.2 { '+' } else { '.' }).collect();
        println!("{line}");
    }
    Ok(())
}
