"""Independent reference evaluators used only by the test suite.

These are deliberately written against the metric definitions, not against
the package code: plain loops, explicit n-gram enumeration, full-matrix LCS.
They exist so the production implementations can be checked against a second,
independent route.
"""

from __future__ import annotations

import math


def ngrams_list(tokens, n):
    """All n-grams of ``tokens`` as a list of tuples, in order."""
    out = []
    for i in range(len(tokens) - n + 1):
        out.append(tuple(tokens[i : i + n]))
    return out


def multibleu(hyp_lines, ref_lines_per_hyp, max_n=4):
    """Corpus BLEU following the classic multi-bleu script.

    ``hyp_lines`` are whitespace-tokenizable strings; ``ref_lines_per_hyp`` is
    a list of reference-string lists. No smoothing; brevity penalty uses the
    closest reference length, ties broken toward the shorter reference.
    Returns a score in [0, 100].
    """
    correct = [0] * max_n
    total = [0] * max_n
    sys_len = 0
    ref_len = 0
    for hyp_line, ref_lines in zip(hyp_lines, ref_lines_per_hyp):
        hyp = hyp_line.split()
        refs = [r.split() for r in ref_lines]
        sys_len += len(hyp)
        closest_diff = None
        closest_len = None
        for ref in refs:
            diff = abs(len(ref) - len(hyp))
            if closest_diff is None or diff < closest_diff:
                closest_diff = diff
                closest_len = len(ref)
            elif diff == closest_diff and len(ref) < closest_len:
                closest_len = len(ref)
        ref_len += closest_len
        for n in range(1, max_n + 1):
            hyp_grams = ngrams_list(hyp, n)
            total[n - 1] += len(hyp_grams)
            counted = []
            for gram in hyp_grams:
                if counted.count(gram) < max(ref_grams.count(gram) for ref_grams in [ngrams_list(ref, n) for ref in refs]):
                    correct[n - 1] += 1
                    counted.append(gram)
    if sys_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(max_n):
        if total[n] == 0 or correct[n] == 0:
            return 0.0
        log_sum += math.log(correct[n] / total[n])
    if sys_len > ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / sys_len)
    return 100.0 * bp * math.exp(log_sum / max_n)


def _geometric(values):
    if not values:
        return 0.0
    product = 1.0
    for v in values:
        product *= v
    if product == 0.0:
        return 0.0
    return product ** (1.0 / len(values))


def _lcs_length(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def parent_instance_bruteforce(hyp, refs, table_values, lambda_weight=0.5, max_n=4):
    """Table-grounded precision/recall/F1 for one instance, by enumeration.

    ``hyp`` is a token list, ``refs`` a list of token lists (>= 1), and
    ``table_values`` a list of value token sequences. The entailment
    probability of an n-gram is the fraction of its tokens present anywhere in
    the table values. Precision counts a clipped reference match OR table
    entailment per hypothesis n-gram (geometric mean over orders that have
    n-grams). Recall combines the best per-reference entailed recall with the
    mean LCS-based table recall, weighted geometrically by lambda_weight on
    the table side. F1 is the harmonic mean.
    """
    bag = set()
    for seq in table_values:
        for token in seq:
            bag.add(token)

    def entailment(gram):
        hits = 0
        for token in gram:
            if token in bag:
                hits += 1
        return hits / len(gram)

    # precision
    order_precisions = []
    for n in range(1, max_n + 1):
        hyp_grams = ngrams_list(hyp, n)
        if not hyp_grams:
            continue
        numerator = 0.0
        for gram in set(hyp_grams):
            c_hyp = hyp_grams.count(gram)
            best_ref = 0
            for ref in refs:
                c_ref = ngrams_list(ref, n).count(gram)
                if c_ref > best_ref:
                    best_ref = c_ref
            p_ref = min(1.0, best_ref / c_hyp)
            w = entailment(gram)
            numerator += c_hyp * (p_ref + (1.0 - p_ref) * w)
        order_precisions.append(numerator / len(hyp_grams))
    precision = _geometric(order_precisions)

    # entailed recall against each reference, best reference wins
    ref_recall = 0.0
    for ref in refs:
        order_recalls = []
        for n in range(1, max_n + 1):
            ref_grams = ngrams_list(ref, n)
            hyp_grams = ngrams_list(hyp, n)
            denominator = 0.0
            numerator = 0.0
            for gram in set(ref_grams):
                w = entailment(gram)
                c_ref = ref_grams.count(gram)
                denominator += c_ref * w
                numerator += min(hyp_grams.count(gram), c_ref) * w
            if denominator > 0.0:
                order_recalls.append(numerator / denominator)
        ref_recall = max(ref_recall, _geometric(order_recalls))

    # table recall: mean per-value-sequence LCS coverage
    if table_values:
        coverage = 0.0
        for seq in table_values:
            coverage += _lcs_length(list(seq), list(hyp)) / len(seq)
        table_recall = coverage / len(table_values)
    else:
        table_recall = 0.0

    recall = (ref_recall ** (1.0 - lambda_weight)) * (table_recall ** lambda_weight)
    if precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1
