"""Hand-computed scoring reports (sub=4, del=3, ins=3; spaces removed for CER).

Each entry: (ref, hyp, char counts, word counts) with counts as
(correct, substitutions, deletions, insertions, n_ref). Both sides are
normalised before scoring.
"""

PAIRS = [
    # "at" vs "ien": two substitutions and one insertion
    ("le chat dort", "le chien dort", (8, 2, 0, 1, 10), (2, 1, 0, 0, 3)),
    ("abc", "axc", (2, 1, 0, 0, 3), (0, 1, 0, 0, 1)),
    ("a b", "", (0, 0, 2, 0, 2), (0, 0, 2, 0, 2)),
    ("oui", "oui oui", (3, 0, 0, 3, 3), (1, 0, 0, 1, 1)),
    ("bonjour madame", "bonjour madame", (13, 0, 0, 0, 13), (2, 0, 0, 0, 2)),
    # del+ins (6) beats two substitutions (8)
    ("ab", "ba", (1, 0, 1, 1, 2), (0, 1, 0, 0, 1)),
    # 1/16 = 6.25% rounds half up to 6.3
    ("abcdefghijklmnop", "abcdefghijklmnoq", (15, 1, 0, 0, 16), (0, 1, 0, 0, 1)),
    ("le petit chat noir", "le chat noir et", (10, 0, 5, 2, 15), (3, 0, 1, 1, 4)),
    ("C'est l'été.", "c'est lété", (9, 0, 1, 0, 10), (1, 1, 0, 0, 2)),
    ("peut-être demain", "peut être demain", (14, 0, 1, 0, 15), (1, 1, 0, 1, 2)),
]

# per-pair percentage strings: (Corr, Sub, Del, Ins, Err)
PAIR_CHAR_PCT = [
    ("80.0", "20.0", "0.0", "10.0", "30.0"),
    ("66.7", "33.3", "0.0", "0.0", "33.3"),
    ("0.0", "0.0", "100.0", "0.0", "100.0"),
    ("100.0", "0.0", "0.0", "100.0", "100.0"),
    ("100.0", "0.0", "0.0", "0.0", "0.0"),
    ("50.0", "0.0", "50.0", "50.0", "100.0"),
    ("93.8", "6.3", "0.0", "0.0", "6.3"),
    ("66.7", "0.0", "33.3", "13.3", "46.7"),
    ("90.0", "0.0", "10.0", "0.0", "10.0"),
    ("93.3", "0.0", "6.7", "0.0", "6.7"),
]

PAIR_WER = ["33.3", "100.0", "100.0", "100.0", "0.0", "100.0", "100.0", "50.0", "50.0", "100.0"]

CORPUS_CHAR = (75, 4, 10, 7, 89)
CORPUS_CHAR_PCT = ("84.3", "4.5", "11.2", "7.9", "23.6")
CORPUS_WORD = (10, 6, 3, 3, 19)
CORPUS_WORD_PCT = ("52.6", "31.6", "15.8", "15.8", "63.2")
