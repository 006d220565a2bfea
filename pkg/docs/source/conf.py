# Sphinx configuration for the convexp documentation.
# https://www.sphinx-doc.org/en/master/usage/configuration.html
import sys
from datetime import date
from pathlib import Path

sys.path.insert(0, str(Path("../..").absolute()))

from convexp import __version__  # noqa: E402

project = "convexp"
author = "convexp developers"
copyright = f"{date.today().year}, {author}"
version = release = __version__

extensions = [
    "sphinx_rtd_theme",
    "sphinx.ext.autodoc",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
    "sphinx_copybutton",
]

templates_path = ["_templates"]
exclude_patterns = []
smartquotes = False

# Docstrings follow the numpy convention enforced by ruff.
napoleon_google_docstring = False
napoleon_numpy_docstring = True
napoleon_use_rtype = True
napoleon_attr_annotations = True

autodoc_default_options = {
    "members": True,
    "member-order": "bysource",
    "undoc-members": True,
    "exclude-members": "__weakref__",
}
autodoc_typehints = "description"
# Solver option dataclasses document their defaults in the class docstring.
autoclass_content = "class"

html_theme = "sphinx_rtd_theme"
html_static_path = []
html_title = f"convexp {version}"
html_theme_options = {
    "prev_next_buttons_location": "bottom",
    "navigation_depth": 3,
}

copybutton_prompt_text = "$ "
