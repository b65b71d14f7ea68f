"""
Variant tables and equivalence classes
======================================

A variant table lists pairs of characters that are the same word in a
different form. Compiling it groups them into equivalence classes with a
single representative. Confusable pairs are kept aside; they look alike
but never count as the same character.
"""

from hanjakit.variants import build_index, compile_equivalence, load_variant_table, sample_table

table = load_variant_table(
    "# kind\ta\tb\n"
    "representative\t體\t体\n"
    "simplified\t体\t體\n"
    "variant\t体\t躰\n"
    "confusable\t己\t已\n"
)
index = compile_equivalence(table)
print(index.normalize("躰"), index.normalize("体"))   # both map to 體
print(index.are_equivalent("躰", "體"), index.is_confusable("己", "已"))

# without a declared representative the smallest code point wins
print(build_index([("variant", "峯", "峰")]).normalize("峯"))

# the illustrative table shipped with the package
shipped = compile_equivalence(sample_table())
for component in shipped.components()[:5]:
    print(sorted(component), "->", shipped.normalize(min(component)))
