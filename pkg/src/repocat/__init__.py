"""Categorize software projects by classifying their source functions.

Pipeline: extract C/C++ functions from labeled project trees, tokenize them
into code-only / code-description representations, train 100-d word embeddings
on the training functions, train a conv + LSTM classifier over the frozen
embedding (or a bag-of-words logistic-regression baseline), then label whole
projects by plurality vote over their functions' predictions.
"""

__version__ = "0.1.0"
