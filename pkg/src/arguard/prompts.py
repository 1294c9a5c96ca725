"""Prompt library for the cloud vision-language model.

The texts are fixed verbatim; golden-file tests pin every byte. The key-object
prompts come in four variants; the two-image manipulation check uses a single
six-question prompt whose final question asks the model to conjoin its own
answers to questions 3-5.
"""

from __future__ import annotations

from dataclasses import dataclass

STANDARD_KEYOBJECT_PROMPT = (
    "You are an expert in observing the world. Based on the scenario, identify the key "
    "object that needs people's attention or safety inspection in the image based on the "
    "scenario. Give only one object that you think is important to be noticed, and do not "
    "provide any other information. The objects can be caution information signs, "
    "electrical devices, safety equipment, etc. If you think the color is important, you "
    "can also mention the color, such as 'red box,' but be precise and describe the object "
    "with no more than 4 words."
)

# Same pipeline, minimal instruction: no role assignment, no examples.
UNDERDETAILED_KEYOBJECT_PROMPT = (
    "Identify the key object in the image. Give only one object that you think is "
    "important to be noticed. Give the name of the object only and do not provide any "
    "other information."
)

# Asks for every potentially important object instead of exactly one.
GREEDY_KEYOBJECT_PROMPT = STANDARD_KEYOBJECT_PROMPT.replace(
    "Give only one object", "Give any object"
)

# Second step of the end-to-end baseline: the model itself judges obstruction
# of the object named in step one. {key_obj} is substituted at every slot.
END_TO_END_STEP2_TEMPLATE = (
    "You are an expert in augmented content analysis. Look at both images. The first "
    "image is the raw image and there is a {key_obj} in it. The second image is an "
    "augmented image created by overlaying some virtual content on the raw image. "
    "Identify whether the virtual elements in the second image are obstructing the "
    "{key_obj}. If the {key_obj} is blocked or obfuscated, then answer Yes. If the "
    "{key_obj} is not blocked or obfuscated then answer No. The answer should contain "
    "only 'Yes' or 'No.'"
)

MANIPULATION_PROMPT = (
    "Here are two images. The first one is a raw image, and the second one is an "
    "augmented image, created by adding some virtual content to the space.\n"
    "\n"
    "Please answer the following questions:\n"
    "\n"
    "1. What is the virtual content in the augmented image?\n"
    "\n"
    "2. What 'key object' is interacting with the virtual content? Avoid general terms "
    "like 'table surface' or 'environment.'\n"
    "\n"
    "3. Is the virtual content accurately aligned to the object, without a significant "
    "gap? Answer yes or no, then explain why.\n"
    "\n"
    "4. Does the virtual content have a relatively high-quality yet reasonable texture "
    "that blends it into the real world? Answer yes or no, then explain why.\n"
    "\n"
    "5. Do you think the interaction will make users believe the 'key object' has some "
    "false functionality or information it does not have, or lose some true "
    "functionality or information it actually has? Think creatively, only say no if the "
    "combination has no specific semantic relation. Answer yes or no, then explain why.\n"
    "\n"
    "6. If you answered 'yes' in all questions 3, 4, and 5, you must say 'yes.' "
    "Otherwise, you say 'no.'"
)

STANDARD = "standard"
UNDERDETAILED = "underdetailed"
GREEDY = "greedy"
END_TO_END_STEP2 = "end_to_end_step2"


@dataclass(frozen=True)
class PromptVariant:
    """One of the key-object prompt variants.

    ``end_to_end_step2`` carries the key-object phrase to substitute; the
    other variants carry none.
    """

    tag: str
    key_object: str | None = None

    def __post_init__(self):
        if self.tag not in (STANDARD, UNDERDETAILED, GREEDY, END_TO_END_STEP2):
            raise ValueError(f"unknown prompt variant {self.tag!r}")
        if self.tag == END_TO_END_STEP2:
            if not self.key_object or not self.key_object.strip():
                raise ValueError("end_to_end_step2 requires a non-empty key-object phrase")
        elif self.key_object is not None:
            raise ValueError(f"variant {self.tag!r} takes no key-object phrase")


STANDARD_VARIANT = PromptVariant(STANDARD)
UNDERDETAILED_VARIANT = PromptVariant(UNDERDETAILED)
GREEDY_VARIANT = PromptVariant(GREEDY)


def end_to_end_step2(key_object: str) -> PromptVariant:
    return PromptVariant(END_TO_END_STEP2, key_object)


def build_prompt(variant: PromptVariant) -> str:
    """Return the exact prompt text for a key-object variant."""
    if variant.tag == STANDARD:
        return STANDARD_KEYOBJECT_PROMPT
    if variant.tag == UNDERDETAILED:
        return UNDERDETAILED_KEYOBJECT_PROMPT
    if variant.tag == GREEDY:
        return GREEDY_KEYOBJECT_PROMPT
    return END_TO_END_STEP2_TEMPLATE.replace("{key_obj}", variant.key_object)


def build_manipulation_prompt() -> str:
    """Return the six-question dual-image manipulation prompt."""
    return MANIPULATION_PROMPT
