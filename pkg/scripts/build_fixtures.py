"""Regenerate the bundled offline description/embedding fixtures for HomeGrid.

The descriptions below stand in for language-model output; vectors come from
the hashed bag-of-words encoder so the fixture can be rebuilt without network
access.  Run from the repository root:

    python scripts/build_fixtures.py [--out PATH]
"""

import argparse

from auxtasks.embeddings import LexicalEmbeddingProvider, ObjectDescription, default_fixture_path, embed
from auxtasks.env import load_map_file

DESCRIPTIONS = {
    "kitchen cabinet": (
        "A kitchen cabinet is a cupboard mounted in the kitchen above the counter. It stores "
        "cooking pots, pans, plates, bowls, spices and seasoning used for cooking and preparing "
        "food and meals near the stove and the kitchen sink."
    ),
    "cooking pot": (
        "A cooking pot is a deep metal kitchen vessel used to cook food on the stove. It is used "
        "for boiling water, cooking chicken, soup and rice, and is kept in the kitchen cabinet."
    ),
    "seasoning": (
        "Seasoning such as salt, pepper, herbs and spices is added to food while cooking in the "
        "kitchen to improve the flavor of meals like chicken and soup. Kept in the kitchen cabinet near the stove."
    ),
    "fridge": (
        "A fridge is a kitchen appliance that keeps food cold and fresh. It stores chicken, milk, "
        "vegetables and leftovers used for cooking meals in the kitchen next to the stove."
    ),
    "chicken": (
        "Chicken is raw meat food stored in the kitchen fridge and cooked in a cooking pot on the "
        "stove with seasoning to prepare a meal in the kitchen."
    ),
    "stove": (
        "A stove is a kitchen appliance with burners used for cooking food. Pots and pans are "
        "heated on the stove to cook chicken, boil water and prepare meals in the kitchen."
    ),
    "kettle": (
        "A kettle is a kitchen appliance used to boil water for tea and coffee and for cooking. "
        "It sits on the kitchen counter or on the stove in the kitchen."
    ),
    "kitchen sink": (
        "A kitchen sink is a basin with a tap in the kitchen used to wash dishes, pots, "
        "vegetables and food before cooking meals on the stove."
    ),
    "bathroom cabinet": (
        "A bathroom cabinet is a mirrored cupboard in the bathroom that stores toiletries, "
        "toothbrush, toothpaste, razors, medicine and towels used for hygiene and washing."
    ),
    "toilet": (
        "A toilet is a bathroom fixture with a flushing bowl used for hygiene and personal "
        "sanitation. It is found in the bathroom next to the bathtub and washbasin."
    ),
    "bathtub": (
        "A bathtub is a large bathroom tub filled with water from the faucet for bathing, washing "
        "and showering with soap, shampoo and a towel in the bathroom."
    ),
    "faucet": (
        "A faucet is a bathroom tap over the washbasin that supplies hot and cold water for "
        "washing hands, face and brushing teeth in the bathroom hygiene routine."
    ),
    "towel": (
        "A towel is an absorbent cloth hanging in the bathroom used to dry the body and hands "
        "after bathing in the bathtub, showering and washing in the bathroom."
    ),
    "couch": (
        "A couch is a soft upholstered sofa in the living room where people sit and relax, watch "
        "television, read books and entertain guests near the lamp."
    ),
    "television": (
        "A television is an electronic screen in the living room used to watch shows, movies and "
        "news while relaxing on the couch with family and guests."
    ),
    "bookshelf": (
        "A bookshelf is living room furniture with shelves that holds books, magazines and "
        "decorations for reading and relaxing on the couch under the lamp."
    ),
    "floor lamp": (
        "A floor lamp is a tall light in the living room that lights the space for reading books "
        "and relaxing on the couch while watching television in the evening."
    ),
    "bed": (
        "A bed is bedroom furniture with a mattress, pillow and blanket where people sleep and "
        "rest at night in the bedroom."
    ),
    "wardrobe": (
        "A wardrobe is a tall bedroom closet that stores clothes, shirts, dresses, shoes and "
        "blankets. People dress for the day beside the bed in the bedroom."
    ),
    "desk": (
        "A desk is bedroom furniture with a flat surface for studying, writing, working on a "
        "computer and doing homework, placed near the bed in the bedroom."
    ),
    "pillow": (
        "A pillow is a soft cushion placed on the bed in the bedroom to support the head while "
        "sleeping and resting at night under the blanket."
    ),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(default_fixture_path()))
    args = ap.parse_args()

    grid = load_map_file()
    descs = [ObjectDescription(o.proposition, o.display_name, DESCRIPTIONS[o.display_name]) for o in grid.objects]
    store = embed(descs, LexicalEmbeddingProvider())
    store.save(args.out)
    print(f"wrote {len(store)} records to {args.out}")


if __name__ == "__main__":
    main()
