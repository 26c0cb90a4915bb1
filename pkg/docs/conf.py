# Sphinx configuration for the aaunet documentation.
#
# Build from this directory with
#     sphinx-build -b html . html

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

from aaunet import __version__

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
]

master_doc = 'index'
exclude_patterns = ['html']

project = 'aaunet'
author = 'aaunet developers'
copyright = '2024, ' + author
version = release = __version__

html_theme = 'alabaster'
highlight_language = 'python3'

autodoc_member_order = 'bysource'
napoleon_google_docstring = False
