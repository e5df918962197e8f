import os

import hypothesis

hypothesis.settings.register_profile(
    "ci", max_examples=200, deadline=None, print_blob=True
)
hypothesis.settings.register_profile(
    "quick", max_examples=25, deadline=None
)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))
