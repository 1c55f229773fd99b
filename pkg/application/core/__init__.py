"""Configuration, logging and the error hierarchy shared by every stage."""
